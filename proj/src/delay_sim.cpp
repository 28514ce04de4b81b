#include "dlq/delay_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <memory>
#include <random>
#include <thread>

#include "dlq/errors.hpp"

namespace dlq {

InitialSegment InitialSegment::constant(double value) {
    if (!std::isfinite(value)) {
        throw ParameterError("initial segment value must be finite");
    }
    InitialSegment seg;
    seg.constant_ = value;
    return seg;
}

InitialSegment InitialSegment::table(std::vector<double> values) {
    if (values.size() < 2) {
        throw ParameterError("an initial segment table needs at least two nodes");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw ParameterError("initial segment values must be finite");
        }
    }
    InitialSegment seg;
    seg.values_ = std::move(values);
    return seg;
}

std::vector<double> InitialSegment::sample(int m) const {
    if (is_constant()) {
        return std::vector<double>(static_cast<std::size_t>(m + 1), constant_);
    }
    if (values_.size() != static_cast<std::size_t>(m + 1)) {
        throw ParameterError("initial segment table has " + std::to_string(values_.size()) +
                             " values, the grid needs m + 1 = " + std::to_string(m + 1));
    }
    return values_;
}

void SimConfig::validate(const GridSpec& spec) const {
    if (n_paths < 1) {
        throw ParameterError("n_paths must be >= 1");
    }
    if (!std::isfinite(x0)) {
        throw ParameterError("x0 must be finite");
    }
    if (h_sim && std::abs(*h_sim - spec.h) > 1e-12 * spec.h) {
        throw ParameterError("simulation step must equal the kernel grid step h = " +
                             std::to_string(spec.h));
    }
}

MCStats mc_stats(std::span<const double> samples) {
    MCStats out;
    out.n_paths = static_cast<int>(samples.size());
    if (samples.empty()) {
        return out;
    }
    double sum = 0.0;
    for (double v : samples) sum += v;
    out.mean = sum / static_cast<double>(samples.size());
    if (samples.size() > 1) {
        double ss = 0.0;
        for (double v : samples) ss += (v - out.mean) * (v - out.mean);
        out.variance = ss / static_cast<double>(samples.size() - 1);
    }
    out.std_error = std::sqrt(out.variance / static_cast<double>(samples.size()));
    return out;
}

std::vector<double> window_weights(const GridSpec& spec) {
    std::vector<double> w(static_cast<std::size_t>(spec.m + 1), spec.h);
    w.front() = 0.5 * spec.h;
    w.back() = 0.5 * spec.h;
    return w;
}

int time_node(const GridSpec& spec, double t) {
    const double x = t / spec.h;
    const long long k = std::llround(x);
    if (std::abs(x - static_cast<double>(k)) > 1e-9 || k < 0 || k > spec.n_t) {
        throw DomainError("t = " + std::to_string(t) + " is not a node of the grid on [0, T]");
    }
    return static_cast<int>(k);
}

namespace {

void check_node(const GridSpec& spec, int k) {
    if (k < 0 || k > spec.n_t) {
        throw DomainError("node index " + std::to_string(k) + " outside [0, " +
                          std::to_string(spec.n_t) + "]");
    }
}

void check_size(std::span<const double> values, int expected, const char* what) {
    if (values.size() != static_cast<std::size_t>(expected)) {
        throw ParameterError(std::string(what) + " must hold " + std::to_string(expected) +
                             " values, got " + std::to_string(values.size()));
    }
}

/// sum_i w_i P22(t_k, 0, s_i) a_i over the first `count` window nodes.
double p22_column_integral(const KernelGrid& grid, int k, std::span<const double> a, int count) {
    const GridSpec& spec = grid.spec();
    const int m = spec.m;
    double acc = 0.0;
    for (int i = 0; i < count; ++i) {
        const double w = (i == 0 || i == m) ? 0.5 * spec.h : spec.h;
        acc += w * grid.p22(k, m, i) * a[static_cast<std::size_t>(i)];
    }
    return acc;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t path_seed(std::uint64_t master, std::size_t path) {
    return splitmix64(splitmix64(master) ^ (static_cast<std::uint64_t>(path) * 0xD1B54A32D192ED03ULL));
}

/// Runs body(i, worker) for i in [0, n) on contiguous blocks, one block per
/// worker. Rethrows the exception of the lowest failing index.
template <class Body>
void for_each_path(std::size_t n, unsigned threads, Body&& body) {
    unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i, 0u);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t lo = n * w / workers;
            const std::size_t hi = n * (w + 1) / workers;
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i, w);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

unsigned worker_count(const SimConfig& cfg) {
    return cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
}

class PathRunner {
public:
    PathRunner(const KernelGrid& grid, const InitialSegment& gamma, const SimConfig& cfg)
        : grid_(grid), cfg_(cfg), gamma_nodes_(gamma.sample(grid.spec().m)) {
        cfg.validate(grid.spec());
    }

    void run(std::size_t index, const Strategy& strategy, SimulatedPath& path) const {
        const GridSpec& spec = grid_.spec();
        const int m = spec.m;
        const int n_t = spec.n_t;
        const double h = spec.h;
        const double b = grid_.params().b;
        const double sigma = grid_.params().sigma;
        const double sqrt_h = std::sqrt(h);

        path.m = m;
        path.t.resize(static_cast<std::size_t>(n_t + 1));
        path.X.resize(static_cast<std::size_t>(n_t + 1));
        path.alpha.resize(static_cast<std::size_t>(n_t + m + 1));
        path.dW.resize(static_cast<std::size_t>(n_t));
        // alpha at t = 0 comes from the strategy, not from the segment.
        std::copy_n(gamma_nodes_.begin(), m, path.alpha.begin());

        std::mt19937_64 rng(path_seed(cfg_.master_seed, index));
        std::normal_distribution<double> normal;

        path.X[0] = cfg_.x0;
        for (int k = 0; k <= n_t; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            path.t[ku] = spec.t(k);
            ControlContext ctx{k, spec.t(k), path.X[ku],
                               std::span<const double>(path.alpha.data() + k, static_cast<std::size_t>(m))};
            path.alpha[ku + static_cast<std::size_t>(m)] = strategy(ctx);
            if (k == n_t) {
                break;
            }
            const double dw = cfg_.zero_noise ? 0.0 : sqrt_h * normal(rng);
            path.dW[ku] = dw;
            const double x_next = path.X[ku] + path.alpha[ku] * (b * h + sigma * dw);
            if (!std::isfinite(x_next) || !std::isfinite(path.alpha[ku + static_cast<std::size_t>(m)])) {
                throw SimulationError(index, k,
                                      "non-finite state on path " + std::to_string(index) +
                                          " at step " + std::to_string(k));
            }
            path.X[ku + 1] = x_next;
        }
    }

private:
    const KernelGrid& grid_;
    const SimConfig& cfg_;
    std::vector<double> gamma_nodes_;
};

}  // namespace

double feedback_single(const KernelGrid& grid, int k, double x, std::span<const double> past,
                       double xi) {
    const GridSpec& spec = grid.spec();
    const int m = spec.m;
    check_node(spec, k);
    check_size(past, m, "control history");
    if (k > spec.n_t - m) {
        return 0.0;
    }
    const double hat = grid.p2hat2(k, m);
    const double denom = hat + 0.5 * spec.h * grid.p22(k, m, m);
    if (!(hat > 0.0) || !(denom > 0.0)) {
        throw DegeneracyError("P2hat2(t,0) = " + std::to_string(hat) + " is not positive at t = " +
                              std::to_string(spec.t(k)));
    }
    const double acc = (x - xi) * grid.p12(k, m) + p22_column_integral(grid, k, past, m);
    return -acc / denom;
}

double feedback_single(const KernelGrid& grid, double t, double x, std::span<const double> past,
                       double xi) {
    return feedback_single(grid, time_node(grid.spec(), t), x, past, xi);
}

double feedback_map(const KernelGrid& grid, int k, double x, std::span<const double> window,
                    double xi) {
    const GridSpec& spec = grid.spec();
    const int m = spec.m;
    check_node(spec, k);
    check_size(window, m + 1, "control window");
    if (k > spec.n_t - m) {
        return 0.0;
    }
    const double hat = grid.p2hat2(k, m);
    if (!(hat > 0.0)) {
        throw DegeneracyError("P2hat2(t,0) = " + std::to_string(hat) + " is not positive at t = " +
                              std::to_string(spec.t(k)));
    }
    return -((x - xi) * grid.p12(k, m) + p22_column_integral(grid, k, window, m + 1)) / hat;
}

TwoAssetControl feedback_two_asset(const KernelGrid& grid, const TwoAssetParams& params, int k,
                                   double x, std::span<const double> past_beta, double xi) {
    const GridSpec& spec = grid.spec();
    const int m = spec.m;
    TwoAssetControl out;
    out.beta = feedback_single(grid, k, x, past_beta, xi);

    const double p11 = grid.p11(k);
    if (!(p11 > 0.0)) {
        throw DegeneracyError("P11(t) = " + std::to_string(p11) + " is not positive at t = " +
                              std::to_string(spec.t(k)));
    }
    double integral = 0.0;
    for (int i = 0; i <= m; ++i) {
        const double w = (i == 0 || i == m) ? 0.5 * spec.h : spec.h;
        const double beta_i = i < m ? past_beta[static_cast<std::size_t>(i)] : out.beta;
        integral += w * beta_i * grid.p12(k, i);
    }
    const double ratio = params.lambda1 / params.sigma1;
    out.alpha = -(ratio * (x - xi) + params.rho * params.sigma2 / params.sigma1 * past_beta[0] +
                  ratio / p11 * integral);
    return out;
}

Strategy optimal_strategy(const KernelGrid& grid, double xi) {
    return [&grid, xi](const ControlContext& ctx) {
        return feedback_single(grid, ctx.k, ctx.x, ctx.past, xi);
    };
}

std::vector<SimulatedPath> simulate(const KernelGrid& grid, const InitialSegment& gamma,
                                    const SimConfig& cfg, const Strategy& strategy) {
    const PathRunner runner(grid, gamma, cfg);
    std::vector<SimulatedPath> paths(static_cast<std::size_t>(cfg.n_paths));
    for_each_path(paths.size(), worker_count(cfg),
                  [&](std::size_t i, unsigned) { runner.run(i, strategy, paths[i]); });
    return paths;
}

std::vector<double> simulate_reduce(const KernelGrid& grid, const InitialSegment& gamma,
                                    const SimConfig& cfg, const Strategy& strategy,
                                    const PathFunctional& reduce) {
    const PathRunner runner(grid, gamma, cfg);
    const unsigned workers = worker_count(cfg);
    std::vector<SimulatedPath> scratch(workers);
    std::vector<double> out(static_cast<std::size_t>(cfg.n_paths));
    for_each_path(out.size(), workers, [&](std::size_t i, unsigned w) {
        runner.run(i, strategy, scratch[w]);
        out[i] = reduce(scratch[w]);
    });
    return out;
}

std::vector<double> simulate_terminal(const KernelGrid& grid, const InitialSegment& gamma,
                                      const SimConfig& cfg, const Strategy& strategy) {
    return simulate_reduce(grid, gamma, cfg, strategy,
                           [](const SimulatedPath& p) { return p.X.back(); });
}

double window_cost(const KernelGrid& grid, int k, double y, std::span<const double> window) {
    const GridSpec& spec = grid.spec();
    const int m = spec.m;
    check_node(spec, k);
    check_size(window, m + 1, "control window");
    const std::vector<double> w = window_weights(spec);
    const auto p12 = grid.p12_row(k);
    const auto p22 = grid.p22_row(k);
    const auto width = static_cast<std::size_t>(m + 1);

    double linear = 0.0;
    double diagonal = 0.0;
    double quadratic = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
        const double a = window[i];
        if (a == 0.0) continue;
        const double wa = w[i] * a;
        linear += wa * p12[i];
        diagonal += wa * a * grid.p2hat2(k, static_cast<int>(i));
        const double* row = p22.data() + i * width;
        double inner = 0.0;
        for (std::size_t l = 0; l < width; ++l) {
            inner += w[l] * row[l] * window[l];
        }
        quadratic += wa * inner;
    }
    return 2.0 * y * linear + diagonal + quadratic;
}

double running_value(const KernelGrid& grid, int k, double y, std::span<const double> window) {
    const double cost = window_cost(grid, k, y, window);
    return grid.p11(k) * y * y + cost;
}

double value_of(const KernelGrid& grid, double x, const InitialSegment& gamma) {
    const std::vector<double> nodes = gamma.sample(grid.spec().m);
    return running_value(grid, 0, x, nodes);
}

std::vector<double> martingale_residual(const KernelGrid& grid, const SimulatedPath& path,
                                        double xi) {
    const GridSpec& spec = grid.spec();
    const int m = spec.m;
    const int n_t = spec.n_t;
    if (path.m != m || path.X.size() != static_cast<std::size_t>(n_t + 1) ||
        path.alpha.size() != static_cast<std::size_t>(n_t + m + 1)) {
        throw ParameterError("path does not match the kernel grid");
    }
    const auto width = static_cast<std::size_t>(m + 1);
    auto window = [&](int k) { return std::span<const double>(path.alpha.data() + k, width); };

    std::vector<double> out(static_cast<std::size_t>(n_t));
    double v = running_value(grid, 0, path.X[0] - xi, window(0));
    for (int k = 0; k < n_t; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const double y_next = path.X[ku + 1] - xi;
        const double v_next = k + 1 == n_t ? y_next * y_next : running_value(grid, k + 1, y_next, window(k + 1));
        const double gap = path.control(k) - feedback_map(grid, k, path.X[ku], window(k), xi);
        out[ku] = v_next - v - grid.p2hat2(k, m) * gap * gap * spec.h;
        v = v_next;
    }
    return out;
}

namespace {

class TwoAssetRunner {
public:
    TwoAssetRunner(const KernelGrid& grid, const TwoAssetParams& params, const InitialSegment& gamma,
                   const SimConfig& cfg, double xi)
        : grid_(grid), params_(params), cfg_(cfg), xi_(xi), gamma_nodes_(gamma.sample(grid.spec().m)) {
        params.validate();
        cfg.validate(grid.spec());
    }

    void run(std::size_t index, TwoAssetPath& path) const {
        const GridSpec& spec = grid_.spec();
        const int m = spec.m;
        const int n_t = spec.n_t;
        const double h = spec.h;
        const double sqrt_h = std::sqrt(h);
        const double rho_c = std::sqrt(1.0 - params_.rho * params_.rho);
        const auto mu = static_cast<std::size_t>(m);

        path.m = m;
        path.t.resize(static_cast<std::size_t>(n_t + 1));
        path.X.resize(static_cast<std::size_t>(n_t + 1));
        path.alpha.assign(static_cast<std::size_t>(n_t), 0.0);
        path.beta.resize(static_cast<std::size_t>(n_t + m + 1));
        path.dW1.resize(static_cast<std::size_t>(n_t));
        path.dW2.resize(static_cast<std::size_t>(n_t));
        std::copy_n(gamma_nodes_.begin(), m, path.beta.begin());

        std::mt19937_64 rng(path_seed(cfg_.master_seed, index));
        std::normal_distribution<double> normal;

        path.X[0] = cfg_.x0;
        for (int k = 0; k <= n_t; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            path.t[ku] = spec.t(k);
            const TwoAssetControl u = feedback_two_asset(
                grid_, params_, k, path.X[ku], std::span<const double>(path.beta.data() + k, mu), xi_);
            path.beta[ku + mu] = u.beta;
            if (k == n_t) {
                break;
            }
            path.alpha[ku] = u.alpha;
            double z1 = 0.0;
            double z2 = 0.0;
            if (!cfg_.zero_noise) {
                z1 = normal(rng);
                z2 = normal(rng);
            }
            const double dw1 = sqrt_h * z1;
            const double dw2 = sqrt_h * (params_.rho * z1 + rho_c * z2);
            path.dW1[ku] = dw1;
            path.dW2[ku] = dw2;
            const double x_next =
                path.X[ku] +
                u.alpha * (params_.sigma1 * params_.lambda1 * h + params_.sigma1 * dw1) +
                path.beta[ku] * (params_.sigma2 * params_.lambda2 * h + params_.sigma2 * dw2);
            if (!std::isfinite(x_next)) {
                throw SimulationError(index, k,
                                      "non-finite state on path " + std::to_string(index) +
                                          " at step " + std::to_string(k));
            }
            path.X[ku + 1] = x_next;
        }
    }

private:
    const KernelGrid& grid_;
    const TwoAssetParams& params_;
    const SimConfig& cfg_;
    double xi_;
    std::vector<double> gamma_nodes_;
};

void write_field(std::FILE* f, double v) { std::fprintf(f, "%.17g", v); }

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};

std::unique_ptr<std::FILE, FileCloser> open_for_write(const std::filesystem::path& file) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(file.string().c_str(), "w"));
    if (!f) {
        throw ParameterError("cannot open " + file.string() + " for writing");
    }
    return f;
}

}  // namespace

std::vector<TwoAssetPath> simulate_two_asset(const KernelGrid& grid, const TwoAssetParams& params,
                                             const InitialSegment& gamma, const SimConfig& cfg,
                                             double xi) {
    const TwoAssetRunner runner(grid, params, gamma, cfg, xi);
    std::vector<TwoAssetPath> paths(static_cast<std::size_t>(cfg.n_paths));
    for_each_path(paths.size(), worker_count(cfg),
                  [&](std::size_t i, unsigned) { runner.run(i, paths[i]); });
    return paths;
}

std::vector<double> simulate_two_asset_terminal(const KernelGrid& grid,
                                                const TwoAssetParams& params,
                                                const InitialSegment& gamma, const SimConfig& cfg,
                                                double xi) {
    const TwoAssetRunner runner(grid, params, gamma, cfg, xi);
    const unsigned workers = worker_count(cfg);
    std::vector<TwoAssetPath> scratch(workers);
    std::vector<double> out(static_cast<std::size_t>(cfg.n_paths));
    for_each_path(out.size(), workers, [&](std::size_t i, unsigned w) {
        runner.run(i, scratch[w]);
        out[i] = scratch[w].X.back();
    });
    return out;
}

void export_paths_csv(std::span<const SimulatedPath> paths, const std::filesystem::path& file) {
    auto f = open_for_write(file);
    std::fputs("path_id,t,X,alpha\n", f.get());
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const SimulatedPath& path = paths[p];
        const double h = path.t.size() > 1 ? path.t[1] - path.t[0] : 0.0;
        for (int i = 0; i < path.m; ++i) {
            std::fprintf(f.get(), "%zu,", p);
            write_field(f.get(), (i - path.m) * h);
            std::fputs(",,", f.get());
            write_field(f.get(), path.alpha[static_cast<std::size_t>(i)]);
            std::fputc('\n', f.get());
        }
        for (std::size_t k = 0; k < path.X.size(); ++k) {
            std::fprintf(f.get(), "%zu,", p);
            write_field(f.get(), path.t[k]);
            std::fputc(',', f.get());
            write_field(f.get(), path.X[k]);
            std::fputc(',', f.get());
            write_field(f.get(), path.alpha[k + static_cast<std::size_t>(path.m)]);
            std::fputc('\n', f.get());
        }
    }
    if (std::ferror(f.get())) {
        throw ParameterError("write failed for " + file.string());
    }
}

void export_paths_csv(std::span<const TwoAssetPath> paths, const std::filesystem::path& file) {
    auto f = open_for_write(file);
    std::fputs("path_id,t,X,alpha,beta\n", f.get());
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const TwoAssetPath& path = paths[p];
        const double h = path.t.size() > 1 ? path.t[1] - path.t[0] : 0.0;
        for (int i = 0; i < path.m; ++i) {
            std::fprintf(f.get(), "%zu,", p);
            write_field(f.get(), (i - path.m) * h);
            std::fputs(",,,", f.get());
            write_field(f.get(), path.beta[static_cast<std::size_t>(i)]);
            std::fputc('\n', f.get());
        }
        for (std::size_t k = 0; k < path.X.size(); ++k) {
            std::fprintf(f.get(), "%zu,", p);
            write_field(f.get(), path.t[k]);
            std::fputc(',', f.get());
            write_field(f.get(), path.X[k]);
            std::fputc(',', f.get());
            write_field(f.get(), k < path.alpha.size() ? path.alpha[k] : 0.0);
            std::fputc(',', f.get());
            write_field(f.get(), path.beta[k + static_cast<std::size_t>(path.m)]);
            std::fputc('\n', f.get());
        }
    }
    if (std::ferror(f.get())) {
        throw ParameterError("write failed for " + file.string());
    }
}

}  // namespace dlq
