#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dlq/delay_sim.hpp"
#include "dlq/markowitz.hpp"
#include "dlq/model.hpp"
#include "dlq/riccati_solver.hpp"

namespace dlq::cli {

/// Sectioned `key = value` text. `#` and `;` start comments.
struct IniDocument {
    struct Entry {
        std::string value;
        int line = 0;
    };
    std::string source;
    std::map<std::string, std::map<std::string, Entry>> sections;

    const Entry* find(const std::string& section, const std::string& key) const;
};

/// Throws ParseError with the offending line.
IniDocument parse_ini(const std::string& text, const std::string& source);
IniDocument read_ini(const std::filesystem::path& path);

enum class ProblemKind { Single, TwoAsset, Markowitz, Markowitz2 };

std::string to_string(ProblemKind kind);

struct GammaSpec {
    enum class Kind { Constant, Table } kind = Kind::Constant;
    double value = 0.0;
    std::filesystem::path file;  ///< resolved against the config's directory
};

struct RunConfig {
    ProblemKind kind = ProblemKind::Single;
    ModelParams model;
    TwoAssetParams two_asset;
    MarketParams market;

    int m = 32;
    std::optional<double> h;  ///< overrides m when set (must divide d)

    SolveConfig solver;
    SimConfig sim;
    double xi = 0.0;          ///< target shift for single / two-asset simulations
    int export_paths = 100;   ///< paths written to paths.csv

    GammaSpec gamma;
    std::vector<double> c_list;
    std::filesystem::path out_dir = "dlq_out";

    /// Delay and horizon of whichever parameter block the kind uses.
    double delay() const;
    double horizon() const;
    GridSpec grid_spec() const;
    InitialSegment initial_segment(int m) const;
};

/// Builds and validates a RunConfig. Unknown sections or keys and missing
/// required keys throw ConfigError.
RunConfig config_from_ini(const IniDocument& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Full-precision config text that reloads to the same RunConfig.
std::string to_ini(const RunConfig& cfg);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& data);

}  // namespace dlq::cli
