#include "dlq/cli/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dlq/errors.hpp"

namespace dlq::cli {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::optional<double> to_double(const std::string& text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

std::string fmt(double v) {
    std::array<char, 40> buf{};
    std::snprintf(buf.data(), buf.size(), "%.17g", v);
    return buf.data();
}

/// Reads typed keys out of one section and remembers which were used.
class SectionReader {
public:
    SectionReader(const IniDocument& doc, std::string section) : doc_(doc), section_(std::move(section)) {}

    bool has(const std::string& key) {
        used_.insert(key);
        return doc_.find(section_, key) != nullptr;
    }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
        used_.insert(key);
        const auto* e = doc_.find(section_, key);
        if (!e) {
            if (fallback) return *fallback;
            throw ConfigError("missing required key [" + section_ + "] " + key);
        }
        const auto v = to_double(e->value);
        if (!v) {
            throw ConfigError(where(*e) + "[" + section_ + "] " + key + " = '" + e->value +
                              "' is not a number");
        }
        return *v;
    }

    long long integer(const std::string& key, long long fallback) {
        used_.insert(key);
        const auto* e = doc_.find(section_, key);
        if (!e) return fallback;
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
        if (ec != std::errc() || ptr != e->value.data() + e->value.size()) {
            throw ConfigError(where(*e) + "[" + section_ + "] " + key + " = '" + e->value +
                              "' is not an integer");
        }
        return v;
    }

    std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) {
        used_.insert(key);
        const auto* e = doc_.find(section_, key);
        if (!e) return fallback;
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
        if (ec != std::errc() || ptr != e->value.data() + e->value.size()) {
            throw ConfigError(where(*e) + "[" + section_ + "] " + key + " = '" + e->value +
                              "' is not an unsigned integer");
        }
        return v;
    }

    bool boolean(const std::string& key, bool fallback) {
        used_.insert(key);
        const auto* e = doc_.find(section_, key);
        if (!e) return fallback;
        const std::string v = lower(e->value);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError(where(*e) + "[" + section_ + "] " + key + " = '" + e->value +
                          "' is not a boolean");
    }

    std::optional<std::string> text(const std::string& key) {
        used_.insert(key);
        const auto* e = doc_.find(section_, key);
        if (!e) return std::nullopt;
        return e->value;
    }

    /// Rejects keys that no reader asked for.
    void finish() const {
        const auto it = doc_.sections.find(section_);
        if (it == doc_.sections.end()) return;
        for (const auto& [key, entry] : it->second) {
            if (!used_.count(key)) {
                throw ConfigError(where(entry) + "unknown key [" + section_ + "] " + key);
            }
        }
    }

private:
    std::string where(const IniDocument::Entry& e) const {
        return doc_.source + ":" + std::to_string(e.line) + ": ";
    }

    const IniDocument& doc_;
    std::string section_;
    std::set<std::string> used_;
};

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        const auto v = to_double(t);
        if (!v) throw ConfigError("'" + t + "' in list is not a number");
        out.push_back(*v);
    }
    return out;
}

std::vector<double> read_gamma_table(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open initial segment table " + file.string());
    }
    std::vector<double> values;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        const auto comma = t.rfind(',');
        if (comma != std::string::npos) t = trim(t.substr(comma + 1));
        const auto v = to_double(t);
        if (!v) {
            if (values.empty() && line_no == 1) continue;  // header
            throw ParseError(file.string(), line_no, "'" + t + "' is not a number");
        }
        values.push_back(*v);
    }
    return values;
}

}  // namespace

const IniDocument::Entry* IniDocument::find(const std::string& section, const std::string& key) const {
    const auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

IniDocument parse_ini(const std::string& text, const std::string& source) {
    IniDocument doc;
    doc.source = source;
    std::stringstream ss(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        const auto comment = raw.find_first_of("#;");
        const std::string body = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']' || body.size() < 3) {
                throw ParseError(source, line, "malformed section header '" + body + "'");
            }
            section = lower(trim(body.substr(1, body.size() - 2)));
            doc.sections[section];
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ParseError(source, line, "expected 'key = value', got '" + body + "'");
        }
        if (section.empty()) {
            throw ParseError(source, line, "key outside of any [section]");
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(source, line, "empty key");
        }
        auto& entries = doc.sections[section];
        if (entries.count(key)) {
            throw ParseError(source, line, "duplicate key '" + key + "' in [" + section + "]");
        }
        entries[key] = IniDocument::Entry{value, line};
    }
    return doc;
}

IniDocument read_ini(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_ini(ss.str(), path.string());
}

std::string to_string(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::Single: return "single";
        case ProblemKind::TwoAsset: return "two-asset";
        case ProblemKind::Markowitz: return "markowitz";
        case ProblemKind::Markowitz2: return "markowitz2";
    }
    return "?";
}

double RunConfig::delay() const {
    switch (kind) {
        case ProblemKind::Single: return model.d;
        case ProblemKind::Markowitz: return market.d;
        default: return two_asset.d;
    }
}

double RunConfig::horizon() const {
    switch (kind) {
        case ProblemKind::Single: return model.T;
        case ProblemKind::Markowitz: return market.T;
        default: return two_asset.T;
    }
}

GridSpec RunConfig::grid_spec() const {
    if (h) return GridSpec::from_step(delay(), horizon(), *h);
    return GridSpec::make(delay(), horizon(), m);
}

InitialSegment RunConfig::initial_segment(int steps) const {
    if (gamma.kind == GammaSpec::Kind::Constant) {
        return InitialSegment::constant(gamma.value);
    }
    InitialSegment seg = InitialSegment::table(read_gamma_table(gamma.file));
    seg.sample(steps);  // length check
    return seg;
}

RunConfig config_from_ini(const IniDocument& doc, const std::filesystem::path& base_dir) {
    RunConfig cfg;

    SectionReader problem(doc, "problem");
    const std::string kind = lower(problem.text("kind").value_or("single"));
    if (kind == "single") {
        cfg.kind = ProblemKind::Single;
    } else if (kind == "two-asset") {
        cfg.kind = ProblemKind::TwoAsset;
    } else if (kind == "markowitz") {
        cfg.kind = ProblemKind::Markowitz;
    } else if (kind == "markowitz2") {
        cfg.kind = ProblemKind::Markowitz2;
    } else {
        throw ConfigError("unknown [problem] kind '" + kind +
                          "' (expected single, two-asset, markowitz or markowitz2)");
    }
    problem.finish();

    // [pinn] belongs to the network trainer that shares this file format.
    std::set<std::string> allowed = {"problem", "grid", "solver", "sim", "gamma", "output", "pinn"};
    switch (cfg.kind) {
        case ProblemKind::Single: {
            allowed.insert("model");
            SectionReader r(doc, "model");
            cfg.model.b = r.number("b");
            cfg.model.sigma = r.number("sigma");
            cfg.model.d = r.number("d");
            cfg.model.T = r.number("T");
            r.finish();
            break;
        }
        case ProblemKind::TwoAsset:
        case ProblemKind::Markowitz2: {
            allowed.insert("two_asset");
            SectionReader r(doc, "two_asset");
            cfg.two_asset.sigma1 = r.number("sigma1");
            cfg.two_asset.sigma2 = r.number("sigma2");
            cfg.two_asset.lambda1 = r.number("lambda1");
            cfg.two_asset.lambda2 = r.number("lambda2");
            cfg.two_asset.rho = r.number("rho", 0.0);
            cfg.two_asset.d = r.number("d");
            cfg.two_asset.T = r.number("T");
            r.finish();
            if (cfg.kind == ProblemKind::Markowitz2) {
                allowed.insert("market");
                allowed.insert("frontier");
                SectionReader mr(doc, "market");
                cfg.market.x0 = mr.number("x0");
                cfg.market.c = mr.number("c");
                mr.finish();
            }
            break;
        }
        case ProblemKind::Markowitz: {
            allowed.insert("market");
            allowed.insert("frontier");
            SectionReader r(doc, "market");
            cfg.market.lambda = r.number("lambda");
            cfg.market.sigma = r.number("sigma");
            cfg.market.d = r.number("d");
            cfg.market.T = r.number("T");
            cfg.market.x0 = r.number("x0");
            cfg.market.c = r.number("c");
            r.finish();
            break;
        }
    }
    for (const auto& [name, entries] : doc.sections) {
        if (!allowed.count(name)) {
            throw ConfigError("section [" + name + "] is not used by problem kind '" + kind + "'");
        }
    }

    SectionReader grid(doc, "grid");
    cfg.m = static_cast<int>(grid.integer("m", cfg.m));
    if (grid.has("h")) cfg.h = grid.number("h");
    grid.finish();

    SectionReader solver(doc, "solver");
    cfg.solver.tol = solver.number("tol", cfg.solver.tol);
    cfg.solver.max_iter = static_cast<int>(solver.integer("max_iter", cfg.solver.max_iter));
    if (solver.has("positivity_floor")) cfg.solver.positivity_floor = solver.number("positivity_floor");
    solver.finish();

    SectionReader sim(doc, "sim");
    cfg.sim.n_paths = static_cast<int>(sim.integer("n_paths", cfg.sim.n_paths));
    cfg.sim.master_seed = sim.unsigned64("master_seed", cfg.sim.master_seed);
    const bool market_kind = cfg.kind == ProblemKind::Markowitz || cfg.kind == ProblemKind::Markowitz2;
    if (market_kind) {
        if (sim.has("x0") || sim.has("xi")) {
            throw ConfigError("[sim] x0 / xi are set by [market] for problem kind '" + kind + "'");
        }
        cfg.sim.x0 = cfg.market.x0;
    } else {
        cfg.sim.x0 = sim.number("x0", 0.0);
        cfg.xi = sim.number("xi", 0.0);
    }
    cfg.sim.zero_noise = sim.boolean("zero_noise", false);
    cfg.sim.threads = static_cast<unsigned>(sim.integer("threads", 0));
    cfg.export_paths = static_cast<int>(sim.integer("export_paths", cfg.export_paths));
    sim.finish();

    SectionReader gamma(doc, "gamma");
    const std::string gkind = lower(gamma.text("kind").value_or("constant"));
    if (gkind == "constant") {
        cfg.gamma.kind = GammaSpec::Kind::Constant;
        cfg.gamma.value = gamma.number("value", 0.0);
        if (gamma.has("file")) throw ConfigError("[gamma] file needs kind = table");
    } else if (gkind == "table") {
        cfg.gamma.kind = GammaSpec::Kind::Table;
        const auto file = gamma.text("file");
        if (!file || file->empty()) throw ConfigError("[gamma] kind = table needs a file");
        std::filesystem::path p(*file);
        cfg.gamma.file = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
        if (!std::filesystem::exists(cfg.gamma.file)) {
            throw ConfigError("initial segment table " + cfg.gamma.file.string() + " does not exist");
        }
        if (gamma.has("value")) throw ConfigError("[gamma] value needs kind = constant");
    } else {
        throw ConfigError("unknown [gamma] kind '" + gkind + "' (expected constant or table)");
    }
    gamma.finish();

    if (market_kind) {
        SectionReader fr(doc, "frontier");
        if (const auto list = fr.text("c_list")) cfg.c_list = parse_list(*list);
        fr.finish();
    }

    SectionReader output(doc, "output");
    if (const auto dir = output.text("dir")) cfg.out_dir = *dir;
    output.finish();

    // Parameter validation errors are configuration errors here.
    try {
        switch (cfg.kind) {
            case ProblemKind::Single: cfg.model.validate(); break;
            case ProblemKind::TwoAsset: cfg.two_asset.validate(); break;
            case ProblemKind::Markowitz: cfg.market.validate(); break;
            case ProblemKind::Markowitz2:
                cfg.two_asset.validate();
                if (!std::isfinite(cfg.market.x0) || !std::isfinite(cfg.market.c)) {
                    throw ParameterError("x0 and c must be finite");
                }
                break;
        }
        cfg.solver.validate();
        if (cfg.export_paths < 0) throw ParameterError("export_paths must be >= 0");
        if (cfg.sim.n_paths < 1) throw ParameterError("n_paths must be >= 1");
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    return config_from_ini(read_ini(path), path.parent_path());
}

std::string to_ini(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[problem]\nkind = " << to_string(cfg.kind) << "\n\n";
    switch (cfg.kind) {
        case ProblemKind::Single:
            out << "[model]\nb = " << fmt(cfg.model.b) << "\nsigma = " << fmt(cfg.model.sigma)
                << "\nd = " << fmt(cfg.model.d) << "\nT = " << fmt(cfg.model.T) << "\n\n";
            break;
        case ProblemKind::TwoAsset:
        case ProblemKind::Markowitz2:
            out << "[two_asset]\nsigma1 = " << fmt(cfg.two_asset.sigma1)
                << "\nsigma2 = " << fmt(cfg.two_asset.sigma2)
                << "\nlambda1 = " << fmt(cfg.two_asset.lambda1)
                << "\nlambda2 = " << fmt(cfg.two_asset.lambda2) << "\nrho = " << fmt(cfg.two_asset.rho)
                << "\nd = " << fmt(cfg.two_asset.d) << "\nT = " << fmt(cfg.two_asset.T) << "\n\n";
            if (cfg.kind == ProblemKind::Markowitz2) {
                out << "[market]\nx0 = " << fmt(cfg.market.x0) << "\nc = " << fmt(cfg.market.c)
                    << "\n\n";
            }
            break;
        case ProblemKind::Markowitz:
            out << "[market]\nlambda = " << fmt(cfg.market.lambda)
                << "\nsigma = " << fmt(cfg.market.sigma) << "\nd = " << fmt(cfg.market.d)
                << "\nT = " << fmt(cfg.market.T) << "\nx0 = " << fmt(cfg.market.x0)
                << "\nc = " << fmt(cfg.market.c) << "\n\n";
            break;
    }
    out << "[grid]\nm = " << cfg.m << "\n";
    if (cfg.h) out << "h = " << fmt(*cfg.h) << "\n";
    out << "\n[solver]\ntol = " << fmt(cfg.solver.tol) << "\nmax_iter = " << cfg.solver.max_iter << "\n";
    if (cfg.solver.positivity_floor) out << "positivity_floor = " << fmt(*cfg.solver.positivity_floor) << "\n";
    out << "\n[sim]\nn_paths = " << cfg.sim.n_paths << "\nmaster_seed = " << cfg.sim.master_seed << "\n";
    if (cfg.kind == ProblemKind::Single || cfg.kind == ProblemKind::TwoAsset) {
        out << "x0 = " << fmt(cfg.sim.x0) << "\nxi = " << fmt(cfg.xi) << "\n";
    }
    out << "zero_noise = " << (cfg.sim.zero_noise ? "true" : "false") << "\nthreads = " << cfg.sim.threads
        << "\nexport_paths = " << cfg.export_paths << "\n\n";
    out << "[gamma]\n";
    if (cfg.gamma.kind == GammaSpec::Kind::Constant) {
        out << "kind = constant\nvalue = " << fmt(cfg.gamma.value) << "\n\n";
    } else {
        out << "kind = table\nfile = " << std::filesystem::absolute(cfg.gamma.file).string() << "\n\n";
    }
    if ((cfg.kind == ProblemKind::Markowitz || cfg.kind == ProblemKind::Markowitz2) && !cfg.c_list.empty()) {
        out << "[frontier]\nc_list = ";
        for (std::size_t i = 0; i < cfg.c_list.size(); ++i) {
            out << (i ? ", " : "") << fmt(cfg.c_list[i]);
        }
        out << "\n\n";
    }
    out << "[output]\ndir = " << cfg.out_dir.string() << "\n";
    return out.str();
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

}  // namespace dlq::cli
