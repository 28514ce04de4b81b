#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlq/model.hpp"

namespace dlq {

enum class KernelId { P11, P12, P2hat2, P22 };

/// "11", "12", "2hat2", "22"
std::string_view kernel_name(KernelId which);
KernelId parse_kernel_name(std::string_view name);
/// Number of delay coordinates (s, r) a kernel takes: 0, 1 or 2.
int kernel_arity(KernelId which);

/// Closed range of time-node indices [lo, hi].
struct SliceBounds {
    int lo = 0;
    int hi = 0;
    int rows() const { return hi - lo + 1; }
};

/// Uniform grid on [0,T] x [-d,0]^2 with step h = d/m, so that both the slice
/// boundaries T - n d and the discontinuity surfaces t + s + d = T fall on
/// nodes.
///
/// Node (k, j, l) sits at t = k h, s = -d + j h, r = -d + l h. Hence
/// t + s + d = (k + j) h and the surface t + s + d = T is k + j = n_t.
struct GridSpec {
    double h = 0.0;
    int m = 0;               ///< steps per delay
    int n_t = 0;             ///< time steps, T = n_t h
    double d = 0.0;          ///< m h
    double T = 0.0;          ///< horizon actually used (snapped to a node)
    double T_requested = 0;  ///< horizon before snapping
    bool snapped = false;
    /// slices[0] = [n_t - m, n_t] is the top slice; slices[n] covers
    /// [max(0, n_t - (n+1) m), n_t - n m].
    std::vector<SliceBounds> slices;

    /// Throws ParameterError for d <= 0, T <= 0 or m < 1.
    static GridSpec make(double d, double T, int m);
    /// Builds from a step; d / h must be an integer up to 1e-9 relative.
    static GridSpec from_step(double d, double T, double h);

    double t(int k) const { return k * h; }
    double s(int j) const { return -d + j * h; }
    int top_lo() const { return slices.front().lo; }
    /// Index of the slice owning the step [k, k+1].
    int slice_of_step(int k) const;
    bool operator==(const GridSpec& other) const;
};

/// Discretized Riccati kernels P11(t), P12(t,s), P22(t,s,r) on a GridSpec.
///
/// P2hat2 is not stored. It is the transport of P11:
///   P2hat2(t,s) = sigma^2 P11(t+s+d) 1{t+s+d <= T}.
/// For the two-asset system `params()` holds the effective boundary drift and
/// volatility and `undelayed_rate()` the squared risk premium of the
/// undelayed asset.
class KernelGrid {
public:
    KernelGrid(ModelParams params, GridSpec spec, double undelayed_rate = 0.0);

    const GridSpec& spec() const { return spec_; }
    const ModelParams& params() const { return params_; }
    double undelayed_rate() const { return undelayed_rate_; }
    double sigma2() const { return params_.sigma * params_.sigma; }

    double p11(int k) const { return p11_[static_cast<std::size_t>(k)]; }
    double p12(int k, int j) const { return p12_[index12(k, j)]; }
    double p22(int k, int j, int l) const { return p22_[index22(k, j, l)]; }
    double p2hat2(int k, int j) const;

    std::span<double> p11_data() { return p11_; }
    std::span<double> p12_row(int k) { return {p12_.data() + index12(k, 0), row12()}; }
    std::span<double> p22_row(int k) { return {p22_.data() + index22(k, 0, 0), row22()}; }
    std::span<const double> p12_row(int k) const { return {p12_.data() + index12(k, 0), row12()}; }
    std::span<const double> p22_row(int k) const { return {p22_.data() + index22(k, 0, 0), row22()}; }

    bool row_solved(int k) const { return solved_[static_cast<std::size_t>(k)] != 0; }
    void mark_solved(int lo, int hi, bool value = true);
    bool fully_solved() const;

    /// Value at an arbitrary point of [0,T] x [-d,0]^2.
    ///
    /// Cells clear of the indicator surfaces use multilinear interpolation.
    /// Cells touching a surface are split into simplices that never cross it
    /// and points on the null side return exactly 0.
    /// Throws DomainError outside the domain, StateError on unsolved rows.
    double eval(KernelId which, double t, double s = 0.0, double r = 0.0) const;

private:
    std::size_t row12() const { return static_cast<std::size_t>(spec_.m + 1); }
    std::size_t row22() const { return row12() * row12(); }
    std::size_t index12(int k, int j) const {
        return static_cast<std::size_t>(k) * row12() + static_cast<std::size_t>(j);
    }
    std::size_t index22(int k, int j, int l) const {
        return static_cast<std::size_t>(k) * row22() + static_cast<std::size_t>(j) * row12() +
               static_cast<std::size_t>(l);
    }

    double eval11(double t) const;
    double eval12(double t, double s) const;
    double eval22(double t, double s, double r) const;
    void require_rows(int k0, int k1) const;

    ModelParams params_;
    GridSpec spec_;
    double undelayed_rate_ = 0.0;
    std::vector<double> p11_;
    std::vector<double> p12_;
    std::vector<double> p22_;
    std::vector<unsigned char> solved_;
};

/// Fills the rows of the top slice [T-d, T] with the closed forms
///   P11 = 1, P12 = b 1{t+s+d <= T}, P22 = b^2 1{t + s v r + d <= T}.
/// Other rows stay unsolved.
KernelGrid init_top_slice(const ModelParams& params, const GridSpec& spec);

/// Node values of one kernel on a GridSpec, with a per-row solved mask.
/// Used for CSV exchange and comparisons, including kernels that came from
/// an external solver (where P2hat2 is an independent table).
struct KernelTable {
    KernelId which = KernelId::P11;
    GridSpec spec;
    std::vector<double> values;
    std::vector<unsigned char> solved;

    KernelTable(KernelId which, GridSpec spec);
    std::size_t row_size() const;
    double& at(int k, int j = 0, int l = 0);
    double at(int k, int j = 0, int l = 0) const;
};

KernelTable tabulate(const KernelGrid& grid, KernelId which);

/// CSV with header `kernel,t,s,r,value`, 17 significant digits, rows in
/// lexicographic (t,s,r) order; unsolved rows are omitted.
void export_csv(const KernelGrid& grid, KernelId which, const std::filesystem::path& path);
void export_csv(const KernelTable& table, const std::filesystem::path& path);
/// File name used for a kernel inside an output directory, e.g. "p2hat2.csv".
std::string kernel_file_name(KernelId which);

/// One parsed CSV row.
struct KernelRow {
    double t = 0.0;
    double s = 0.0;
    double r = 0.0;
    double value = 0.0;
};

struct KernelCsv {
    KernelId which = KernelId::P11;
    std::vector<KernelRow> rows;
};

/// Parses a kernel CSV. Throws ParseError naming the offending line.
KernelCsv read_kernel_csv(const std::filesystem::path& path);
/// Parses and places the rows on `spec`'s nodes. Rows absent from the file
/// stay unsolved. A time row is solved only when all its nodes are present.
KernelTable import_csv(const std::filesystem::path& path, const GridSpec& spec);

/// Overwrites a grid's stored kernel from a table (P2hat2 is rejected since it
/// is implied by P11). Rows marked solved in the table become solved.
void load_into(KernelGrid& grid, const KernelTable& table);

struct MaxDiff {
    double value = 0.0;
    double t = 0.0;
    double s = 0.0;
    double r = 0.0;
    std::size_t n_common = 0;
};

/// Exact max |a - b| over nodes solved in both. Throws ParameterError when
/// the grids differ.
MaxDiff max_abs_diff(const KernelTable& a, const KernelTable& b);
MaxDiff max_abs_diff(const KernelGrid& a, const KernelGrid& b, KernelId which);

}  // namespace dlq
