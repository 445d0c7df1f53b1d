#pragma once

// Command implementations behind the wvcd binary. Each command takes a
// config struct that can be filled from a JSON config file (unknown keys
// rejected) and overridden by flags; tests drive these functions directly.
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 resource
// guard.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wvcd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitResource = 4;

// Default output root: --out flag, else WVCD_OUTPUT_ROOT, else ".".
std::string default_output_root();

struct GenConfig {
  std::string coupling_class = "ferro";
  int width = 3;
  int height = 3;
  std::uint64_t seed = 1;
  int count = 1;  // batch generation: seeds seed..seed+count-1
  std::string out;

  static GenConfig from_json_file(const std::string& path);
};

struct CoeffsConfig {
  std::string instance_path;
  std::vector<int> degrees = {1};
  std::string ansatz = "one-body";
  int grid_points = 100;
  bool use_cache = true;
  int threads = 0;  // 0 = library default
  std::string out;

  static CoeffsConfig from_json_file(const std::string& path);
};

struct SimulateConfig {
  std::string instance_path;
  std::string protocol_dir;  // where cmd_coeffs wrote its tables
  std::vector<int> degrees = {1};
  bool include_undriven = true;
  std::vector<double> durations = {0.01};
  std::string ansatz = "one-body";
  int store_points = 0;
  bool fidelity_trace = false;
  int dense_guard = 14;
  int threads = 0;
  std::string out;

  static SimulateConfig from_json_file(const std::string& path);
};

struct EnsembleConfig {
  std::string coupling_class = "ferro";
  int width = 3;
  int height = 3;
  int count = 100;
  std::uint64_t seed_base = 1;
  std::vector<int> degrees = {1, 2, 3, 4, 5};
  std::string ansatz = "one-body";
  double duration = 0.01;
  int grid_points = 100;
  int dense_guard = 14;
  int threads = 0;
  bool resume = true;
  std::string out;

  static EnsembleConfig from_json_file(const std::string& path);
};

struct BenchConfig {
  std::vector<int> degrees = {2, 3};
  // Chain lengths per degree. Each ladder stays within one memory regime:
  // once the term maps outgrow the last-level cache, every hash probe turns
  // into a DRAM miss and a log-log fit across that transition inflates the
  // slope even though the operation count stays O(N^K).
  std::map<int, std::vector<int>> ladders = {
      {2, {64, 128, 256, 512}},
      {3, {12, 16, 24, 32}},
  };
  double slope_tolerance = 0.7;
  std::uint64_t seed = 1;
  int threads = 0;
  bool compare_kernels = false;  // serial reference vs parallel kernels
  std::string out;

  static BenchConfig from_json_file(const std::string& path);
};

int cmd_gen(const GenConfig& cfg);
int cmd_coeffs(const CoeffsConfig& cfg);
int cmd_simulate(const SimulateConfig& cfg);
int cmd_ensemble(const EnsembleConfig& cfg);

struct BenchOutcome {
  std::map<int, double> slopes;  // fitted log-log slope per degree
  bool all_within_band = true;
};
int cmd_bench(const BenchConfig& cfg, BenchOutcome* outcome = nullptr);

// Quantile with linear interpolation between order statistics
// (q in [0, 1]; 0.5 is the median).
double quantile(std::vector<double> values, double q);

// Canonical file names shared by coeffs/simulate/ensemble.
std::string protocol_csv_name(const std::string& instance_hash, int degree,
                              const std::string& ansatz_id);
std::string protocol_meta_name(const std::string& instance_hash, int degree,
                               const std::string& ansatz_id);
std::string traces_cache_name(const std::string& instance_hash, int degree,
                              const std::string& ansatz_id);

// Full command-line front end.
int run_main(int argc, char** argv);

}  // namespace wvcd::cli
