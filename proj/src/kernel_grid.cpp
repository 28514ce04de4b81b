#include "dlq/kernel_grid.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dlq/errors.hpp"

namespace dlq {

namespace {

constexpr double kNodeTol = 1e-9;

std::string format_double(double v) {
    std::array<char, 40> buf{};
    std::snprintf(buf.data(), buf.size(), "%.17g", v);
    return buf.data();
}

}  // namespace

std::string_view kernel_name(KernelId which) {
    switch (which) {
        case KernelId::P11: return "11";
        case KernelId::P12: return "12";
        case KernelId::P2hat2: return "2hat2";
        case KernelId::P22: return "22";
    }
    return "?";
}

KernelId parse_kernel_name(std::string_view name) {
    if (name == "11") return KernelId::P11;
    if (name == "12") return KernelId::P12;
    if (name == "2hat2") return KernelId::P2hat2;
    if (name == "22") return KernelId::P22;
    throw ParameterError("unknown kernel '" + std::string(name) + "'");
}

int kernel_arity(KernelId which) {
    switch (which) {
        case KernelId::P11: return 0;
        case KernelId::P12:
        case KernelId::P2hat2: return 1;
        case KernelId::P22: return 2;
    }
    return 0;
}

std::string kernel_file_name(KernelId which) {
    return "p" + std::string(kernel_name(which)) + ".csv";
}

// ---------------------------------------------------------------- GridSpec

GridSpec GridSpec::make(double d, double T, int m) {
    if (!(d > 0.0) || !std::isfinite(d)) {
        throw ParameterError("the grid solver needs a positive finite delay");
    }
    if (!(T > 0.0) || !std::isfinite(T)) {
        throw ParameterError("horizon T must be > 0");
    }
    if (m < 1) {
        throw ParameterError("steps per delay m must be >= 1");
    }
    GridSpec spec;
    spec.m = m;
    spec.h = d / m;
    spec.d = d;
    spec.T_requested = T;
    const double steps = T / spec.h;
    spec.n_t = static_cast<int>(std::llround(steps));
    if (spec.n_t < 1) {
        throw ParameterError("horizon shorter than half a grid step");
    }
    spec.T = spec.n_t * spec.h;
    spec.snapped = std::abs(spec.T - T) > 1e-12 * T;
    if (!spec.snapped) {
        spec.T = T;
    }
    for (int n = 0;; ++n) {
        const int hi = spec.n_t - n * m;
        const int lo = std::max(0, hi - m);
        spec.slices.push_back({lo, hi});
        if (lo == 0) {
            break;
        }
    }
    return spec;
}

GridSpec GridSpec::from_step(double d, double T, double h) {
    if (!(h > 0.0)) {
        throw ParameterError("grid step h must be > 0");
    }
    const double ratio = d / h;
    const auto m = static_cast<int>(std::llround(ratio));
    if (m < 1 || std::abs(ratio - m) > 1e-9 * ratio) {
        throw ParameterError("delay d must be an integer multiple of h");
    }
    return make(d, T, m);
}

int GridSpec::slice_of_step(int k) const {
    return (n_t - k - 1) / m;
}

bool GridSpec::operator==(const GridSpec& other) const {
    return m == other.m && n_t == other.n_t && std::abs(h - other.h) <= 1e-14 * h;
}

// -------------------------------------------------------------- KernelGrid

KernelGrid::KernelGrid(ModelParams params, GridSpec spec, double undelayed_rate)
    : params_(params), spec_(std::move(spec)), undelayed_rate_(undelayed_rate) {
    params_.validate();
    params_.T = spec_.T;
    const auto rows = static_cast<std::size_t>(spec_.n_t + 1);
    p11_.assign(rows, 0.0);
    p12_.assign(rows * row12(), 0.0);
    p22_.assign(rows * row22(), 0.0);
    solved_.assign(rows, 0);
}

double KernelGrid::p2hat2(int k, int j) const {
    const int shifted = k + j;
    if (shifted > spec_.n_t) {
        return 0.0;
    }
    return sigma2() * p11(shifted);
}

void KernelGrid::mark_solved(int lo, int hi, bool value) {
    for (int k = lo; k <= hi; ++k) {
        solved_[static_cast<std::size_t>(k)] = value ? 1 : 0;
    }
}

bool KernelGrid::fully_solved() const {
    return std::all_of(solved_.begin(), solved_.end(), [](unsigned char v) { return v != 0; });
}

void KernelGrid::require_rows(int k0, int k1) const {
    if (!row_solved(k0) || !row_solved(k1)) {
        throw StateError("kernel queried on an unsolved region near t = " +
                         format_double(spec_.t(k0)));
    }
}

double KernelGrid::eval(KernelId which, double t, double s, double r) const {
    const double t_tol = kNodeTol * std::max(1.0, spec_.T);
    const double s_tol = kNodeTol * std::max(1.0, spec_.d);
    auto check = [](double v, double lo, double hi, double tol, const char* name) {
        if (!std::isfinite(v) || v < lo - tol || v > hi + tol) {
            throw DomainError(std::string(name) + " = " + format_double(v) + " outside [" +
                              format_double(lo) + ", " + format_double(hi) + "]");
        }
        return std::clamp(v, lo, hi);
    };
    t = check(t, 0.0, spec_.T, t_tol, "t");
    const int arity = kernel_arity(which);
    if (arity >= 1) {
        s = check(s, -spec_.d, 0.0, s_tol, "s");
    }
    if (arity >= 2) {
        r = check(r, -spec_.d, 0.0, s_tol, "r");
    }

    switch (which) {
        case KernelId::P11: return eval11(t);
        case KernelId::P12: return eval12(t, s);
        case KernelId::P2hat2: {
            const double shifted = t + s + spec_.d;
            if (shifted > spec_.T + t_tol) {
                return 0.0;
            }
            return sigma2() * eval11(std::min(shifted, spec_.T));
        }
        case KernelId::P22: return eval22(t, s, r);
    }
    return 0.0;
}

double KernelGrid::eval11(double t) const {
    const double x = t / spec_.h;
    const int k0 = std::clamp(static_cast<int>(std::floor(x)), 0, spec_.n_t - 1);
    const double fx = x - k0;
    require_rows(k0, k0 + 1);
    return (1.0 - fx) * p11(k0) + fx * p11(k0 + 1);
}

double KernelGrid::eval12(double t, double s) const {
    const double x = t / spec_.h;
    const double y = (s + spec_.d) / spec_.h;
    const int k0 = std::clamp(static_cast<int>(std::floor(x)), 0, spec_.n_t - 1);
    const int j0 = std::clamp(static_cast<int>(std::floor(y)), 0, spec_.m - 1);
    require_rows(k0, k0 + 1);
    const int n_t = spec_.n_t;
    if (x + y > n_t + kNodeTol * n_t) {
        return 0.0;
    }
    const double fx = x - k0;
    const double fy = y - j0;
    const double v00 = p12(k0, j0);
    const double v10 = p12(k0 + 1, j0);
    const double v01 = p12(k0, j0 + 1);
    const double v11 = p12(k0 + 1, j0 + 1);
    if (k0 + j0 + 2 <= n_t) {
        return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 +
               fx * fy * v11;
    }
    if (k0 + j0 + 1 == n_t) {
        // The surface is the cell's anti-diagonal; the point is on the lower
        // triangle whose three corners all carry the indicator.
        return v00 + fx * (v10 - v00) + fy * (v01 - v00);
    }
    // Only the (k0, j0) corner lies on the surface.
    return v00;
}

double KernelGrid::eval22(double t, double s, double r) const {
    const double x = t / spec_.h;
    const double y = (s + spec_.d) / spec_.h;
    const double z = (r + spec_.d) / spec_.h;
    const int k0 = std::clamp(static_cast<int>(std::floor(x)), 0, spec_.n_t - 1);
    const int j0 = std::clamp(static_cast<int>(std::floor(y)), 0, spec_.m - 1);
    const int l0 = std::clamp(static_cast<int>(std::floor(z)), 0, spec_.m - 1);
    require_rows(k0, k0 + 1);
    const int n_t = spec_.n_t;
    if (x + std::max(y, z) > n_t + kNodeTol * n_t) {
        return 0.0;
    }
    const double fx = x - k0;
    const double fy = y - j0;
    const double fz = z - l0;

    if (k0 + 1 + std::max(j0, l0) + 1 <= n_t) {
        double acc = 0.0;
        for (int dk = 0; dk < 2; ++dk) {
            const double wk = dk ? fx : 1 - fx;
            for (int dj = 0; dj < 2; ++dj) {
                const double wj = dj ? fy : 1 - fy;
                for (int dl = 0; dl < 2; ++dl) {
                    const double wl = dl ? fz : 1 - fz;
                    acc += wk * wj * wl * p22(k0 + dk, j0 + dj, l0 + dl);
                }
            }
        }
        return acc;
    }

    // Kuhn triangulation in (1 - fx, fy, fz). Its cutting planes fy = 1 - fx
    // and fz = 1 - fx are exactly the surfaces t + s + d = T and t + r + d = T
    // inside this cell, so no simplex straddles a discontinuity.
    struct Axis {
        double c;
        int dk, dj, dl;
    };
    std::array<Axis, 3> axes{{{1.0 - fx, -1, 0, 0}, {fy, 0, 1, 0}, {fz, 0, 0, 1}}};
    std::sort(axes.begin(), axes.end(), [](const Axis& a, const Axis& b) { return a.c > b.c; });
    int k = k0 + 1;
    int j = j0;
    int l = l0;
    double acc = (1.0 - axes[0].c) * p22(k, j, l);
    for (int i = 0; i < 3; ++i) {
        k += axes[i].dk;
        j += axes[i].dj;
        l += axes[i].dl;
        const double w = axes[i].c - (i + 1 < 3 ? axes[i + 1].c : 0.0);
        if (w != 0.0) {
            acc += w * p22(k, j, l);
        }
    }
    return acc;
}

KernelGrid init_top_slice(const ModelParams& params, const GridSpec& spec) {
    KernelGrid grid(params, spec);
    const int n_t = spec.n_t;
    const int m = spec.m;
    const int lo = spec.top_lo();
    const double b = params.b;
    auto p11 = grid.p11_data();
    for (int k = lo; k <= n_t; ++k) {
        p11[static_cast<std::size_t>(k)] = 1.0;
        auto row12 = grid.p12_row(k);
        auto row22 = grid.p22_row(k);
        for (int j = 0; j <= m; ++j) {
            row12[static_cast<std::size_t>(j)] = (k + j <= n_t) ? b : 0.0;
            for (int l = 0; l <= m; ++l) {
                row22[static_cast<std::size_t>(j * (m + 1) + l)] =
                    (k + std::max(j, l) <= n_t) ? b * b : 0.0;
            }
        }
    }
    grid.mark_solved(lo, n_t);
    return grid;
}

// ------------------------------------------------------------- KernelTable

KernelTable::KernelTable(KernelId which_, GridSpec spec_)
    : which(which_), spec(std::move(spec_)) {
    values.assign(static_cast<std::size_t>(spec.n_t + 1) * row_size(), 0.0);
    solved.assign(static_cast<std::size_t>(spec.n_t + 1), 0);
}

std::size_t KernelTable::row_size() const {
    const auto w = static_cast<std::size_t>(spec.m + 1);
    switch (kernel_arity(which)) {
        case 0: return 1;
        case 1: return w;
        default: return w * w;
    }
}

double& KernelTable::at(int k, int j, int l) {
    const auto w = static_cast<std::size_t>(spec.m + 1);
    std::size_t offset = 0;
    switch (kernel_arity(which)) {
        case 0: break;
        case 1: offset = static_cast<std::size_t>(j); break;
        default: offset = static_cast<std::size_t>(j) * w + static_cast<std::size_t>(l); break;
    }
    return values[static_cast<std::size_t>(k) * row_size() + offset];
}

double KernelTable::at(int k, int j, int l) const {
    return const_cast<KernelTable*>(this)->at(k, j, l);
}

KernelTable tabulate(const KernelGrid& grid, KernelId which) {
    const GridSpec& spec = grid.spec();
    KernelTable table(which, spec);
    const int m = spec.m;
    for (int k = 0; k <= spec.n_t; ++k) {
        if (!grid.row_solved(k)) {
            continue;
        }
        switch (which) {
            case KernelId::P11: table.at(k) = grid.p11(k); break;
            case KernelId::P12:
                for (int j = 0; j <= m; ++j) table.at(k, j) = grid.p12(k, j);
                break;
            case KernelId::P2hat2:
                for (int j = 0; j <= m; ++j) table.at(k, j) = grid.p2hat2(k, j);
                break;
            case KernelId::P22:
                for (int j = 0; j <= m; ++j)
                    for (int l = 0; l <= m; ++l) table.at(k, j, l) = grid.p22(k, j, l);
                break;
        }
        table.solved[static_cast<std::size_t>(k)] = 1;
    }
    return table;
}

// --------------------------------------------------------------------- CSV

void export_csv(const KernelGrid& grid, KernelId which, const std::filesystem::path& path) {
    export_csv(tabulate(grid, which), path);
}

void export_csv(const KernelTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw StateError("cannot open " + path.string() + " for writing");
    }
    const GridSpec& spec = table.spec;
    const std::string name(kernel_name(table.which));
    const int arity = kernel_arity(table.which);
    out << "kernel,t,s,r,value\n";
    for (int k = 0; k <= spec.n_t; ++k) {
        if (!table.solved[static_cast<std::size_t>(k)]) {
            continue;
        }
        const std::string t = format_double(spec.t(k));
        if (arity == 0) {
            out << name << ',' << t << ",,," << format_double(table.at(k)) << '\n';
            continue;
        }
        for (int j = 0; j <= spec.m; ++j) {
            const std::string s = format_double(spec.s(j));
            if (arity == 1) {
                out << name << ',' << t << ',' << s << ",," << format_double(table.at(k, j))
                    << '\n';
                continue;
            }
            for (int l = 0; l <= spec.m; ++l) {
                out << name << ',' << t << ',' << s << ',' << format_double(spec.s(l)) << ','
                    << format_double(table.at(k, j, l)) << '\n';
            }
        }
    }
    if (!out) {
        throw StateError("failed writing " + path.string());
    }
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

bool parse_number(std::string_view text, double& out) {
    if (text.empty()) {
        return false;
    }
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (*first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

KernelCsv read_kernel_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    const std::string source = path.string();
    if (!in) {
        throw ParseError(source, 0, "cannot open file");
    }
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) {
        throw ParseError(source, 1, "missing header");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "kernel,t,s,r,value") {
        throw ParseError(source, line_no, "expected header 'kernel,t,s,r,value', got '" + line + "'");
    }

    KernelCsv csv;
    bool have_kernel = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            continue;
        }
        const auto fields = split_commas(line);
        if (fields.size() != 5) {
            throw ParseError(source, line_no, "expected 5 fields, got " + std::to_string(fields.size()));
        }
        KernelId which{};
        try {
            which = parse_kernel_name(fields[0]);
        } catch (const ParameterError&) {
            throw ParseError(source, line_no, "unknown kernel '" + std::string(fields[0]) + "'");
        }
        if (!have_kernel) {
            csv.which = which;
            have_kernel = true;
        } else if (which != csv.which) {
            throw ParseError(source, line_no, "mixed kernels in one file");
        }
        const int arity = kernel_arity(which);
        KernelRow row;
        if (!parse_number(fields[1], row.t)) {
            throw ParseError(source, line_no, "bad t value '" + std::string(fields[1]) + "'");
        }
        if (arity >= 1 ? !parse_number(fields[2], row.s) : !fields[2].empty()) {
            throw ParseError(source, line_no, "bad s field '" + std::string(fields[2]) + "'");
        }
        if (arity >= 2 ? !parse_number(fields[3], row.r) : !fields[3].empty()) {
            throw ParseError(source, line_no, "bad r field '" + std::string(fields[3]) + "'");
        }
        if (!parse_number(fields[4], row.value)) {
            throw ParseError(source, line_no, "bad value '" + std::string(fields[4]) + "'");
        }
        csv.rows.push_back(row);
    }
    if (!have_kernel) {
        // Header-only file: the kernel is recovered from the file name if possible.
        const std::string stem = path.stem().string();
        if (stem.size() > 1 && stem[0] == 'p') {
            try {
                csv.which = parse_kernel_name(stem.substr(1));
            } catch (const ParameterError&) {
            }
        }
    }
    return csv;
}

KernelTable import_csv(const std::filesystem::path& path, const GridSpec& spec) {
    const KernelCsv csv = read_kernel_csv(path);
    KernelTable table(csv.which, spec);
    const int arity = kernel_arity(csv.which);
    const std::size_t per_row = table.row_size();
    std::vector<std::size_t> counts(static_cast<std::size_t>(spec.n_t + 1), 0);

    auto node_index = [&](double v, double offset, int max_index, int line, const char* name) {
        const double x = (v + offset) / spec.h;
        const auto idx = static_cast<int>(std::llround(x));
        if (idx < 0 || idx > max_index || std::abs(x - idx) > 1e-6) {
            throw ParseError(path.string(), line,
                             std::string(name) + " = " + format_double(v) + " is not a grid node");
        }
        return idx;
    };

    int line = 1;
    for (const KernelRow& row : csv.rows) {
        ++line;
        const int k = node_index(row.t, 0.0, spec.n_t, line, "t");
        const int j = arity >= 1 ? node_index(row.s, spec.d, spec.m, line, "s") : 0;
        const int l = arity >= 2 ? node_index(row.r, spec.d, spec.m, line, "r") : 0;
        table.at(k, j, l) = row.value;
        ++counts[static_cast<std::size_t>(k)];
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
        table.solved[k] = counts[k] == per_row ? 1 : 0;
    }
    return table;
}

void load_into(KernelGrid& grid, const KernelTable& table) {
    if (!(grid.spec() == table.spec)) {
        throw ParameterError("kernel table grid does not match the target grid");
    }
    const int m = grid.spec().m;
    for (int k = 0; k <= grid.spec().n_t; ++k) {
        if (!table.solved[static_cast<std::size_t>(k)]) {
            continue;
        }
        switch (table.which) {
            case KernelId::P11: grid.p11_data()[static_cast<std::size_t>(k)] = table.at(k); break;
            case KernelId::P12: {
                auto row = grid.p12_row(k);
                for (int j = 0; j <= m; ++j) row[static_cast<std::size_t>(j)] = table.at(k, j);
                break;
            }
            case KernelId::P22: {
                auto row = grid.p22_row(k);
                for (int j = 0; j <= m; ++j)
                    for (int l = 0; l <= m; ++l)
                        row[static_cast<std::size_t>(j * (m + 1) + l)] = table.at(k, j, l);
                break;
            }
            case KernelId::P2hat2:
                throw ParameterError("P2hat2 is implied by P11 and cannot be loaded");
        }
        grid.mark_solved(k, k);
    }
}

MaxDiff max_abs_diff(const KernelTable& a, const KernelTable& b) {
    if (!(a.spec == b.spec)) {
        throw ParameterError("max_abs_diff needs identical grids");
    }
    if (a.which != b.which) {
        throw ParameterError("max_abs_diff needs the same kernel on both sides");
    }
    const GridSpec& spec = a.spec;
    const int arity = kernel_arity(a.which);
    const int nj = arity >= 1 ? spec.m + 1 : 1;
    const int nl = arity >= 2 ? spec.m + 1 : 1;
    MaxDiff out;
    bool first = true;
    for (int k = 0; k <= spec.n_t; ++k) {
        if (!a.solved[static_cast<std::size_t>(k)] || !b.solved[static_cast<std::size_t>(k)]) {
            continue;
        }
        for (int j = 0; j < nj; ++j) {
            for (int l = 0; l < nl; ++l) {
                const double diff = std::abs(a.at(k, j, l) - b.at(k, j, l));
                ++out.n_common;
                if (first || diff > out.value) {
                    first = false;
                    out.value = diff;
                    out.t = spec.t(k);
                    out.s = arity >= 1 ? spec.s(j) : 0.0;
                    out.r = arity >= 2 ? spec.s(l) : 0.0;
                }
            }
        }
    }
    return out;
}

MaxDiff max_abs_diff(const KernelGrid& a, const KernelGrid& b, KernelId which) {
    return max_abs_diff(tabulate(a, which), tabulate(b, which));
}

}  // namespace dlq
