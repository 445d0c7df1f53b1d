#include "wvcd/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "wvcd/gs_protocol.hpp"
#include "wvcd/model.hpp"
#include "wvcd/oracle.hpp"

namespace wvcd::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using model::Ansatz;
using model::FactorizedHamiltonian;
using model::IsingInstance;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << content;
}

json parse_config_object(const std::string& path,
                         const std::vector<std::string>& known_keys) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FormatError(std::string("config file: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config file: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known_keys.begin(), known_keys.end(), key) ==
        known_keys.end()) {
      throw FormatError("config file: unknown key '" + key + "'");
    }
  }
  return j;
}

void apply_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Short duration label for file names: 0.01 -> "0.01".
std::string td_label(double td) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", td);
  return buf;
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ResourceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitResource;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

std::string out_root(const std::string& configured) {
  if (!configured.empty()) return configured;
  return default_output_root();
}

}  // namespace

std::string default_output_root() {
  const char* env = std::getenv("WVCD_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? env : ".";
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::string protocol_csv_name(const std::string& instance_hash, int degree,
                              const std::string& ansatz_id) {
  return "protocol_" + instance_hash + "_" + ansatz_id + "_K" +
         std::to_string(degree) + ".csv";
}

std::string protocol_meta_name(const std::string& instance_hash, int degree,
                               const std::string& ansatz_id) {
  return "protocol_" + instance_hash + "_" + ansatz_id + "_K" +
         std::to_string(degree) + ".meta.json";
}

std::string traces_cache_name(const std::string& instance_hash, int degree,
                              const std::string& ansatz_id) {
  return "traces_" + instance_hash + "_" + ansatz_id + "_K" +
         std::to_string(degree) + ".json";
}

// ---------------------------------------------------------------------------
// Config structs

namespace {

std::string config_hash_of(const json& j) { return hex64(fnv1a64(j.dump())); }

}  // namespace

GenConfig GenConfig::from_json_file(const std::string& path) {
  const json j = parse_config_object(
      path, {"class", "width", "height", "seed", "count", "out"});
  GenConfig cfg;
  cfg.coupling_class = j.value("class", cfg.coupling_class);
  cfg.width = j.value("width", cfg.width);
  cfg.height = j.value("height", cfg.height);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.count = j.value("count", cfg.count);
  cfg.out = j.value("out", cfg.out);
  return cfg;
}

CoeffsConfig CoeffsConfig::from_json_file(const std::string& path) {
  const json j = parse_config_object(path, {"instance", "degrees", "ansatz",
                                            "grid", "cache", "threads", "out"});
  CoeffsConfig cfg;
  cfg.instance_path = j.value("instance", cfg.instance_path);
  if (j.contains("degrees")) cfg.degrees = j["degrees"].get<std::vector<int>>();
  cfg.ansatz = j.value("ansatz", cfg.ansatz);
  cfg.grid_points = j.value("grid", cfg.grid_points);
  cfg.use_cache = j.value("cache", cfg.use_cache);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.out = j.value("out", cfg.out);
  return cfg;
}

SimulateConfig SimulateConfig::from_json_file(const std::string& path) {
  const json j = parse_config_object(
      path, {"instance", "protocols", "degrees", "undriven", "td", "ansatz",
             "store_points", "trace", "dense_guard", "threads", "out"});
  SimulateConfig cfg;
  cfg.instance_path = j.value("instance", cfg.instance_path);
  cfg.protocol_dir = j.value("protocols", cfg.protocol_dir);
  if (j.contains("degrees")) cfg.degrees = j["degrees"].get<std::vector<int>>();
  cfg.include_undriven = j.value("undriven", cfg.include_undriven);
  if (j.contains("td")) cfg.durations = j["td"].get<std::vector<double>>();
  cfg.ansatz = j.value("ansatz", cfg.ansatz);
  cfg.store_points = j.value("store_points", cfg.store_points);
  cfg.fidelity_trace = j.value("trace", cfg.fidelity_trace);
  cfg.dense_guard = j.value("dense_guard", cfg.dense_guard);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.out = j.value("out", cfg.out);
  return cfg;
}

EnsembleConfig EnsembleConfig::from_json_file(const std::string& path) {
  const json j = parse_config_object(
      path, {"class", "width", "height", "count", "seed", "degrees", "ansatz",
             "td", "grid", "dense_guard", "threads", "resume", "out"});
  EnsembleConfig cfg;
  cfg.coupling_class = j.value("class", cfg.coupling_class);
  cfg.width = j.value("width", cfg.width);
  cfg.height = j.value("height", cfg.height);
  cfg.count = j.value("count", cfg.count);
  cfg.seed_base = j.value("seed", cfg.seed_base);
  if (j.contains("degrees")) cfg.degrees = j["degrees"].get<std::vector<int>>();
  cfg.ansatz = j.value("ansatz", cfg.ansatz);
  cfg.duration = j.value("td", cfg.duration);
  cfg.grid_points = j.value("grid", cfg.grid_points);
  cfg.dense_guard = j.value("dense_guard", cfg.dense_guard);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.resume = j.value("resume", cfg.resume);
  cfg.out = j.value("out", cfg.out);
  return cfg;
}

BenchConfig BenchConfig::from_json_file(const std::string& path) {
  const json j = parse_config_object(
      path, {"degrees", "ladders", "slope_tolerance", "seed", "threads",
             "compare_kernels", "out"});
  BenchConfig cfg;
  if (j.contains("degrees")) cfg.degrees = j["degrees"].get<std::vector<int>>();
  if (j.contains("ladders")) {
    cfg.ladders.clear();
    for (const auto& [key, value] : j["ladders"].items()) {
      cfg.ladders[std::stoi(key)] = value.get<std::vector<int>>();
    }
  }
  cfg.slope_tolerance = j.value("slope_tolerance", cfg.slope_tolerance);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.compare_kernels = j.value("compare_kernels", cfg.compare_kernels);
  cfg.out = j.value("out", cfg.out);
  return cfg;
}

// ---------------------------------------------------------------------------
// gen

namespace {

std::string instance_file_name(const IsingInstance& inst) {
  return "instance_" + model::coupling_class_name(inst.coupling_class) + "_" +
         std::to_string(inst.width) + "x" + std::to_string(inst.height) +
         "_seed" + std::to_string(inst.seed) + ".json";
}

}  // namespace

int cmd_gen(const GenConfig& cfg) {
  return guarded([&] {
    if (cfg.count < 1) throw FormatError("gen: count must be >= 1");
    const model::CouplingClass cls =
        model::parse_coupling_class(cfg.coupling_class);
    const std::string root = out_root(cfg.out);
    for (int i = 0; i < cfg.count; ++i) {
      const IsingInstance inst =
          model::sample_ising(cls, cfg.width, cfg.height, cfg.seed + i);
      const std::string path =
          (fs::path(root) / instance_file_name(inst)).string();
      write_file(path, inst.to_json());
      std::cout << path << "\n";
    }
  });
}

// ---------------------------------------------------------------------------
// coeffs

namespace {

json coeffs_config_json(const CoeffsConfig& cfg) {
  return json{{"instance", cfg.instance_path}, {"degrees", cfg.degrees},
              {"ansatz", cfg.ansatz},          {"grid", cfg.grid_points},
              {"cache", cfg.use_cache},        {"out", cfg.out}};
}

}  // namespace

int cmd_coeffs(const CoeffsConfig& cfg) {
  return guarded([&] {
    apply_threads(cfg.threads);
    for (int k : cfg.degrees) {
      if (k < 1) throw FormatError("coeffs: degrees must be >= 1 (got " +
                                   std::to_string(k) + ")");
    }
    if (cfg.grid_points < 2) throw FormatError("coeffs: grid must be >= 2");
    const IsingInstance inst =
        IsingInstance::from_json(read_file(cfg.instance_path));
    const std::string hash = inst.content_hash();
    const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
    const Ansatz ansatz =
        model::make_ansatz(model::parse_ansatz_kind(cfg.ansatz), inst);
    const std::vector<double> grid = protocol::uniform_grid(cfg.grid_points);
    const std::string root = out_root(cfg.out);
    const std::string config_hash = config_hash_of(coeffs_config_json(cfg));

    for (int k : cfg.degrees) {
      const std::string cache_path =
          (fs::path(root) / "cache" / traces_cache_name(hash, k, ansatz.id))
              .string();
      std::optional<action::FactorizedTraces> cached;
      if (cfg.use_cache) {
        cached = action::load_traces(cache_path, hash, k, ansatz.id, hf);
        if (cached) {
          std::cout << "K=" << k << " stage 1: cache hit (" << cache_path
                    << ")\n";
        }
      }
      action::FactorizedTraces computed;
      protocol::ProtocolTable table = protocol::solve_protocol(
          hf, ansatz, k, grid, {}, cached ? &*cached : nullptr, &computed);
      table.instance_hash = hash;
      if (!cached) {
        std::cout << "K=" << k << " stage 1: " << table.stage1_seconds
                  << " s\n";
        if (cfg.use_cache) {
          fs::create_directories(fs::path(cache_path).parent_path());
          action::save_traces(computed, hash, cache_path);
        }
      }
      std::cout << "K=" << k << " stage 2: " << table.stage2_seconds << " s ("
                << grid.size() << " points)\n";
      double max_residual = 0.0;
      for (double r : table.residual) max_residual = std::max(max_residual, r);
      std::cout << "K=" << k << " max residual: " << max_residual << "\n";
      if (table.has_gaps()) {
        std::cout << "K=" << k << " WARNING: flagged grid points\n";
      }

      const std::string csv_path =
          (fs::path(root) / protocol_csv_name(hash, k, ansatz.id)).string();
      write_file(csv_path, table.to_csv());
      json meta = json::parse(table.metadata_json());
      meta["config_hash"] = config_hash;
      write_file(
          (fs::path(root) / protocol_meta_name(hash, k, ansatz.id)).string(),
          meta.dump(2));
      std::cout << csv_path << "\n";
    }
  });
}

// ---------------------------------------------------------------------------
// simulate

namespace {

protocol::ProtocolTable load_protocol(const std::string& dir,
                                      const std::string& hash, int degree,
                                      const std::string& ansatz_id) {
  const std::string csv_path =
      (fs::path(dir) / protocol_csv_name(hash, degree, ansatz_id)).string();
  const std::string meta_path =
      (fs::path(dir) / protocol_meta_name(hash, degree, ansatz_id)).string();
  if (!fs::exists(csv_path) || !fs::exists(meta_path)) {
    throw FormatError("simulate: missing protocol table for K=" +
                      std::to_string(degree) + " (expected " + csv_path +
                      "); run the coeffs command first");
  }
  return protocol::ProtocolTable::from_csv(read_file(csv_path),
                                           read_file(meta_path));
}

json simulate_config_json(const SimulateConfig& cfg) {
  return json{{"instance", cfg.instance_path},
              {"degrees", cfg.degrees},
              {"td", cfg.durations},
              {"ansatz", cfg.ansatz},
              {"undriven", cfg.include_undriven},
              {"trace", cfg.fidelity_trace}};
}

}  // namespace

int cmd_simulate(const SimulateConfig& cfg) {
  return guarded([&] {
    apply_threads(cfg.threads);
    const IsingInstance inst =
        IsingInstance::from_json(read_file(cfg.instance_path));
    oracle::check_dense_guard(inst.nspins(), cfg.dense_guard);
    const std::string hash = inst.content_hash();
    const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
    const Ansatz ansatz =
        model::make_ansatz(model::parse_ansatz_kind(cfg.ansatz), inst);
    const std::string root = out_root(cfg.out);
    const std::string protocol_dir =
        cfg.protocol_dir.empty() ? root : cfg.protocol_dir;

    std::vector<std::pair<int, protocol::ProtocolTable>> tables;
    for (int k : cfg.degrees) {
      tables.emplace_back(k, load_protocol(protocol_dir, hash, k, ansatz.id));
    }

    // Shared endpoint ground states across runs.
    const oracle::Vector gs0 =
        oracle::DenseSystem::build(hf.eval(0.0), cfg.dense_guard)
            .ground_state();
    const oracle::Vector gs1 =
        oracle::DenseSystem::build(hf.eval(1.0), cfg.dense_guard)
            .ground_state();

    std::string summary_csv = "td,K,final_fidelity,gain\n";
    json summary_json = json::array();
    for (double td : cfg.durations) {
      oracle::EvolveConfig ecfg;
      ecfg.dense_guard = cfg.dense_guard;
      ecfg.store_points = cfg.store_points;
      ecfg.fidelity_trace = cfg.fidelity_trace;
      ecfg.initial_state = &gs0;
      ecfg.final_ground_state = &gs1;

      std::vector<std::string> labels;
      std::vector<double> finals;
      std::optional<std::size_t> k1_index;
      auto run_one = [&](const oracle::DrivingSpec& spec,
                         const std::string& label) {
        oracle::EvolutionResult res =
            oracle::evolve(hf, spec, &ansatz, td, ecfg);
        labels.push_back(label);
        finals.push_back(res.final_fidelity);
        if (cfg.fidelity_trace) {
          const std::string run_csv =
              (fs::path(root) / ("evolution_" + hash + "_" + ansatz.id + "_" +
                                 label + "_td" + td_label(td) + ".csv"))
                  .string();
          write_file(run_csv, res.to_csv());
        }
        return res;
      };

      if (cfg.include_undriven) run_one(oracle::NoDriving{}, "Knone");
      for (const auto& [k, table] : tables) {
        if (k == 1) k1_index = finals.size();
        run_one(&table, "K" + std::to_string(k));
      }

      for (std::size_t i = 0; i < labels.size(); ++i) {
        double gain = std::numeric_limits<double>::quiet_NaN();
        if (k1_index) {
          const double f1 = finals[*k1_index];
          gain = (f1 == 0.0) ? std::numeric_limits<double>::infinity()
                             : finals[i] / f1;
          if (i == *k1_index) gain = 1.0;
        }
        summary_csv += td_label(td);
        summary_csv += "," + labels[i].substr(1) + "," + fmt_double(finals[i]) +
                       "," + fmt_double(gain) + "\n";
        summary_json.push_back({{"td", td},
                                {"K", labels[i].substr(1)},
                                {"final_fidelity", finals[i]},
                                {"gain", gain}});
      }
    }

    json summary = {{"schema_version", 1},
                    {"instance_hash", hash},
                    {"ansatz", ansatz.id},
                    {"config_hash", config_hash_of(simulate_config_json(cfg))},
                    {"runs", summary_json}};
    const std::string base =
        (fs::path(root) / ("simulate_" + hash + "_" + ansatz.id)).string();
    write_file(base + ".csv", summary_csv);
    write_file(base + ".json", summary.dump(2));
    std::cout << summary_csv;
    std::cout << base << ".csv\n";
  });
}

// ---------------------------------------------------------------------------
// ensemble

namespace {

json ensemble_config_json(const EnsembleConfig& cfg) {
  return json{{"class", cfg.coupling_class},
              {"width", cfg.width},
              {"height", cfg.height},
              {"degrees", cfg.degrees},
              {"ansatz", cfg.ansatz},
              {"td", cfg.duration},
              {"grid", cfg.grid_points}};
}

}  // namespace

int cmd_ensemble(const EnsembleConfig& cfg) {
  return guarded([&] {
    apply_threads(cfg.threads);
    const model::CouplingClass cls =
        model::parse_coupling_class(cfg.coupling_class);
    const model::AnsatzKind kind = model::parse_ansatz_kind(cfg.ansatz);
    if (cfg.count < 1) throw FormatError("ensemble: count must be >= 1");
    for (int k : cfg.degrees) {
      if (k < 1) throw FormatError("ensemble: degrees must be >= 1");
    }
    {
      const int nspins = cfg.width * cfg.height;
      oracle::check_dense_guard(nspins, cfg.dense_guard);
    }

    const std::string root = out_root(cfg.out);
    const std::string run_dir =
        (fs::path(root) / ("ensemble_" + cfg.coupling_class + "_" +
                           std::to_string(cfg.width) + "x" +
                           std::to_string(cfg.height) + "_" + cfg.ansatz))
            .string();
    fs::create_directories(run_dir);
    const std::string config_hash = config_hash_of(ensemble_config_json(cfg));

    std::vector<json> per_instance(cfg.count);
    std::atomic_flag io_lock;

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < cfg.count; ++i) {
      const std::uint64_t seed = cfg.seed_base + static_cast<std::uint64_t>(i);
      const std::string result_path =
          (fs::path(run_dir) / ("instance_" + std::to_string(seed) + ".json"))
              .string();
      json record;
      bool reused = false;
      if (cfg.resume && fs::exists(result_path)) {
        try {
          record = json::parse(read_file(result_path));
          reused = record.value("config_hash", "") == config_hash;
        } catch (const json::exception&) {
          reused = false;
        }
      }
      if (!reused) {
        const IsingInstance inst =
            model::sample_ising(cls, cfg.width, cfg.height, seed);
        const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
        const Ansatz ansatz = model::make_ansatz(kind, inst);
        const std::vector<double> grid =
            protocol::uniform_grid(cfg.grid_points);

        const oracle::Vector gs0 =
            oracle::DenseSystem::build(hf.eval(0.0), cfg.dense_guard)
                .ground_state();
        const oracle::Vector gs1 =
            oracle::DenseSystem::build(hf.eval(1.0), cfg.dense_guard)
                .ground_state();
        oracle::EvolveConfig ecfg;
        ecfg.dense_guard = cfg.dense_guard;
        ecfg.initial_state = &gs0;
        ecfg.final_ground_state = &gs1;

        record = json::object();
        record["schema_version"] = 1;
        record["seed"] = seed;
        record["instance_hash"] = inst.content_hash();
        record["config_hash"] = config_hash;
        json fidelities = json::object();
        const oracle::EvolutionResult undriven =
            oracle::evolve(hf, oracle::NoDriving{}, &ansatz, cfg.duration,
                           ecfg);
        fidelities["none"] = undriven.final_fidelity;
        for (int k : cfg.degrees) {
          protocol::ProtocolTable table =
              protocol::solve_protocol(hf, ansatz, k, grid);
          const oracle::EvolutionResult res =
              oracle::evolve(hf, &table, &ansatz, cfg.duration, ecfg);
          fidelities["K" + std::to_string(k)] = res.final_fidelity;
        }
        record["final_fidelity"] = fidelities;
        while (io_lock.test_and_set(std::memory_order_acquire)) {
        }
        write_file(result_path, record.dump(2));
        std::cout << "instance seed " << seed << " done\n";
        io_lock.clear(std::memory_order_release);
      }
      per_instance[i] = std::move(record);
    }

    // Summary statistics per degree.
    std::string csv =
        "K,median_F,q1_F,q3_F,median_G,q1_G,q3_G,fraction_gain_above_1,count\n";
    std::vector<std::string> keys = {"none"};
    for (int k : cfg.degrees) keys.push_back("K" + std::to_string(k));
    for (const std::string& key : keys) {
      std::vector<double> f_values, g_values;
      int n_gain_above = 0, n_gain = 0;
      for (const json& rec : per_instance) {
        if (!rec.contains("final_fidelity")) continue;
        const json& fid = rec["final_fidelity"];
        if (!fid.contains(key)) continue;
        const double f = fid[key].get<double>();
        f_values.push_back(f);
        if (fid.contains("K1")) {
          const double f1 = fid["K1"].get<double>();
          const double g =
              f1 == 0.0 ? std::numeric_limits<double>::infinity() : f / f1;
          g_values.push_back(g);
          ++n_gain;
          if (g > 1.0) ++n_gain_above;
        }
      }
      csv += key + "," + fmt_double(quantile(f_values, 0.5)) + "," +
             fmt_double(quantile(f_values, 0.25)) + "," +
             fmt_double(quantile(f_values, 0.75)) + "," +
             fmt_double(quantile(g_values, 0.5)) + "," +
             fmt_double(quantile(g_values, 0.25)) + "," +
             fmt_double(quantile(g_values, 0.75)) + "," +
             fmt_double(n_gain > 0 ? static_cast<double>(n_gain_above) / n_gain
                                   : std::numeric_limits<double>::quiet_NaN()) +
             "," + std::to_string(f_values.size()) + "\n";
    }
    write_file((fs::path(run_dir) / "summary.csv").string(), csv);
    std::cout << csv;
    std::cout << (fs::path(run_dir) / "summary.csv").string() << "\n";
  });
}

// ---------------------------------------------------------------------------
// bench

namespace {

double time_stage1(const FactorizedHamiltonian& hf, const Ansatz& ansatz,
                   int degree) {
  const double t0 = now_seconds();
  action::FactorizedTraces ft = action::precompute_factorized(hf, degree, ansatz);
  (void)ft;
  return now_seconds() - t0;
}

double fit_loglog_slope(const std::vector<double>& sizes,
                        const std::vector<double>& times) {
  const std::size_t n = sizes.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(sizes[i]);
    const double y = std::log(times[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

int cmd_bench(const BenchConfig& cfg, BenchOutcome* outcome) {
  return guarded([&] {
    apply_threads(cfg.threads);
    const std::string root = out_root(cfg.out);
    std::string csv = "K,N,stage1_seconds\n";
    BenchOutcome result;

    for (int k : cfg.degrees) {
      const auto it = cfg.ladders.find(k);
      if (it == cfg.ladders.end()) {
        throw FormatError("bench: no chain ladder configured for K=" +
                          std::to_string(k));
      }
      std::vector<double> sizes, times;
      for (int n : it->second) {
        const IsingInstance inst = model::sample_ising(
            model::CouplingClass::Ferromagnetic, n, 1, cfg.seed);
        const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
        const Ansatz ansatz = model::one_body_ansatz(n);
        // Repeat tiny runs so each measurement is comfortably above timer
        // resolution.
        double elapsed = 0.0;
        int reps = 0;
        do {
          elapsed += time_stage1(hf, ansatz, k);
          ++reps;
        } while (elapsed < 0.2 && reps < 50);
        const double per_run = elapsed / reps;
        sizes.push_back(n);
        times.push_back(per_run);
        csv += std::to_string(k) + "," + std::to_string(n) + "," +
               fmt_double(per_run) + "\n";
        std::cout << "K=" << k << " N=" << n << " stage1 " << per_run
                  << " s (" << reps << " rep)\n";
      }
      const double slope = fit_loglog_slope(sizes, times);
      result.slopes[k] = slope;
      const bool ok = std::abs(slope - k) <= cfg.slope_tolerance;
      result.all_within_band = result.all_within_band && ok;
      std::cout << "K=" << k << " slope " << slope << " ["
                << (ok ? "PASS" : "FLAG") << ", band " << k << " +/- "
                << cfg.slope_tolerance << "]\n";
      // Informational throughput extrapolation: chain length reachable in
      // ten minutes of stage-1 work, assuming N^K growth from the largest
      // measured point.
      const double n_10min =
          sizes.back() * std::pow(600.0 / times.back(), 1.0 / k);
      std::cout << "K=" << k << " ten-minute stage-1 reach: N ~= "
                << static_cast<long>(n_10min) << "\n";
    }

    if (cfg.compare_kernels) {
      // Serial reference vs parallel kernels on a medium chain.
      const int n = 256;
      const IsingInstance inst = model::sample_ising(
          model::CouplingClass::Ferromagnetic, n, 1, cfg.seed);
      const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
      const Ansatz ansatz = model::one_body_ansatz(n);
      const int saved = omp_get_max_threads();
      omp_set_num_threads(1);
      const double serial = time_stage1(hf, ansatz, 2);
      omp_set_num_threads(saved);
      const double parallel = time_stage1(hf, ansatz, 2);
      std::cout << "stage1 N=" << n << " K=2: serial " << serial
                << " s, parallel(" << saved << " threads) " << parallel
                << " s\n";

      const pauli::SparseOperator h2 = hf.eval(0.5) * hf.eval(0.5);
      const double t0 = now_seconds();
      std::vector<pauli::SparseOperator> fast =
          pauli::batched_commutator(h2, ansatz.operators);
      const double t_fast = now_seconds() - t0;
      double t_naive = 0.0;
      {
        const double t1 = now_seconds();
        for (const pauli::SparseOperator& a : ansatz.operators) {
          pauli::SparseOperator c = pauli::naive_commutator(h2, a);
          (void)c;
        }
        t_naive = now_seconds() - t1;
      }
      std::cout << "commutators vs |H^2| = " << h2.num_terms()
                << ": site-indexed " << t_fast << " s, all-pairs reference "
                << t_naive << " s\n";
    }

    write_file((fs::path(root) / "bench.csv").string(), csv);
    if (outcome != nullptr) *outcome = result;
    if (!result.all_within_band) {
      throw OptimizationError("bench: a fitted slope left the expected band");
    }
  });
}

// ---------------------------------------------------------------------------
// front end

int run_main(int argc, char** argv) {
  CLI::App app{"weighted variational counterdiabatic driving toolkit"};
  app.require_subcommand(1);

  GenConfig gen_cfg;
  CoeffsConfig coeffs_cfg;
  SimulateConfig sim_cfg;
  EnsembleConfig ens_cfg;
  BenchConfig bench_cfg;
  std::string config_path;

  CLI::App* gen = app.add_subcommand("gen", "generate random Ising instances");
  gen->add_option("--config", config_path, "JSON config file");
  auto* g_class = gen->add_option("--class", gen_cfg.coupling_class,
                                  "ferro | antiferro | spin-glass");
  auto* g_width = gen->add_option("--width", gen_cfg.width, "lattice width");
  auto* g_height = gen->add_option("--height", gen_cfg.height, "lattice height");
  auto* g_seed = gen->add_option("--seed", gen_cfg.seed, "base seed");
  auto* g_count = gen->add_option("--count", gen_cfg.count, "instances");
  auto* g_out = gen->add_option("--out", gen_cfg.out, "output directory");

  CLI::App* coeffs =
      app.add_subcommand("coeffs", "compute driving-coefficient tables");
  coeffs->add_option("--config", config_path, "JSON config file");
  auto* c_inst = coeffs->add_option("--instance", coeffs_cfg.instance_path,
                                    "instance JSON file");
  auto* c_k = coeffs->add_option("-K,--degrees", coeffs_cfg.degrees,
                                 "polynomial degrees (K values)");
  auto* c_ansatz = coeffs->add_option("--ansatz", coeffs_cfg.ansatz,
                                      "one-body | two-body");
  auto* c_grid = coeffs->add_option("--grid", coeffs_cfg.grid_points,
                                    "lambda grid points");
  auto* c_cache = coeffs->add_flag("--cache,!--no-cache", coeffs_cfg.use_cache,
                                   "reuse/write the trace cache");
  auto* c_threads = coeffs->add_option("--threads", coeffs_cfg.threads,
                                       "worker threads (0 = default)");
  auto* c_out = coeffs->add_option("--out", coeffs_cfg.out, "output directory");

  CLI::App* sim = app.add_subcommand("simulate", "evolve and measure fidelity");
  sim->add_option("--config", config_path, "JSON config file");
  auto* s_inst =
      sim->add_option("--instance", sim_cfg.instance_path, "instance JSON");
  auto* s_proto = sim->add_option("--protocols", sim_cfg.protocol_dir,
                                  "directory with protocol tables");
  auto* s_k = sim->add_option("-K,--degrees", sim_cfg.degrees, "K values");
  auto* s_und = sim->add_flag("--undriven,!--no-undriven",
                              sim_cfg.include_undriven,
                              "include the undriven evolution");
  auto* s_td = sim->add_option("--td", sim_cfg.durations, "durations");
  auto* s_ansatz = sim->add_option("--ansatz", sim_cfg.ansatz,
                                   "one-body | two-body");
  auto* s_store =
      sim->add_option("--store-points", sim_cfg.store_points,
                      "interior snapshots for the fidelity trace");
  auto* s_trace = sim->add_flag("--trace", sim_cfg.fidelity_trace,
                                "store per-time fidelity CSVs");
  auto* s_guard = sim->add_option("--dense-guard", sim_cfg.dense_guard,
                                  "max spins for dense simulation");
  auto* s_threads = sim->add_option("--threads", sim_cfg.threads, "threads");
  auto* s_out = sim->add_option("--out", sim_cfg.out, "output directory");

  CLI::App* ens = app.add_subcommand(
      "ensemble", "generate, solve, and simulate an instance ensemble");
  ens->add_option("--config", config_path, "JSON config file");
  auto* e_class = ens->add_option("--class", ens_cfg.coupling_class,
                                  "ferro | antiferro | spin-glass");
  auto* e_width = ens->add_option("--width", ens_cfg.width, "lattice width");
  auto* e_height = ens->add_option("--height", ens_cfg.height, "lattice height");
  auto* e_count = ens->add_option("--count", ens_cfg.count, "instances");
  auto* e_seed = ens->add_option("--seed", ens_cfg.seed_base, "base seed");
  auto* e_k = ens->add_option("-K,--degrees", ens_cfg.degrees, "K values");
  auto* e_ansatz = ens->add_option("--ansatz", ens_cfg.ansatz,
                                   "one-body | two-body");
  auto* e_td = ens->add_option("--td", ens_cfg.duration, "duration");
  auto* e_grid = ens->add_option("--grid", ens_cfg.grid_points, "grid points");
  auto* e_guard = ens->add_option("--dense-guard", ens_cfg.dense_guard,
                                  "max spins for dense simulation");
  auto* e_threads = ens->add_option("--threads", ens_cfg.threads, "threads");
  auto* e_resume = ens->add_flag("--resume,!--no-resume", ens_cfg.resume,
                                 "skip instances with existing results");
  auto* e_out = ens->add_option("--out", ens_cfg.out, "output directory");

  CLI::App* bench =
      app.add_subcommand("bench", "time the algebra stage on 1D chains");
  bench->add_option("--config", config_path, "JSON config file");
  auto* b_k = bench->add_option("-K,--degrees", bench_cfg.degrees, "K values");
  auto* b_tol = bench->add_option("--slope-tolerance",
                                  bench_cfg.slope_tolerance, "slope band");
  auto* b_seed = bench->add_option("--seed", bench_cfg.seed, "instance seed");
  auto* b_threads = bench->add_option("--threads", bench_cfg.threads, "threads");
  auto* b_cmp = bench->add_flag("--compare-kernels", bench_cfg.compare_kernels,
                                "also compare serial and parallel kernels");
  auto* b_out = bench->add_option("--out", bench_cfg.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  // Config-file values fill in every option the command line left untouched.
  try {
    if (gen->parsed()) {
      if (!config_path.empty()) {
        const GenConfig file_cfg = GenConfig::from_json_file(config_path);
        if (!*g_class) gen_cfg.coupling_class = file_cfg.coupling_class;
        if (!*g_width) gen_cfg.width = file_cfg.width;
        if (!*g_height) gen_cfg.height = file_cfg.height;
        if (!*g_seed) gen_cfg.seed = file_cfg.seed;
        if (!*g_count) gen_cfg.count = file_cfg.count;
        if (!*g_out) gen_cfg.out = file_cfg.out;
      }
      return cmd_gen(gen_cfg);
    }
    if (coeffs->parsed()) {
      if (!config_path.empty()) {
        const CoeffsConfig file_cfg = CoeffsConfig::from_json_file(config_path);
        if (!*c_inst) coeffs_cfg.instance_path = file_cfg.instance_path;
        if (!*c_k) coeffs_cfg.degrees = file_cfg.degrees;
        if (!*c_ansatz) coeffs_cfg.ansatz = file_cfg.ansatz;
        if (!*c_grid) coeffs_cfg.grid_points = file_cfg.grid_points;
        if (!*c_cache) coeffs_cfg.use_cache = file_cfg.use_cache;
        if (!*c_threads) coeffs_cfg.threads = file_cfg.threads;
        if (!*c_out) coeffs_cfg.out = file_cfg.out;
      }
      if (coeffs_cfg.instance_path.empty()) {
        std::cerr << "error: coeffs requires --instance\n";
        return kExitConfig;
      }
      return cmd_coeffs(coeffs_cfg);
    }
    if (sim->parsed()) {
      if (!config_path.empty()) {
        const SimulateConfig file_cfg =
            SimulateConfig::from_json_file(config_path);
        if (!*s_inst) sim_cfg.instance_path = file_cfg.instance_path;
        if (!*s_proto) sim_cfg.protocol_dir = file_cfg.protocol_dir;
        if (!*s_k) sim_cfg.degrees = file_cfg.degrees;
        if (!*s_und) sim_cfg.include_undriven = file_cfg.include_undriven;
        if (!*s_td) sim_cfg.durations = file_cfg.durations;
        if (!*s_ansatz) sim_cfg.ansatz = file_cfg.ansatz;
        if (!*s_store) sim_cfg.store_points = file_cfg.store_points;
        if (!*s_trace) sim_cfg.fidelity_trace = file_cfg.fidelity_trace;
        if (!*s_guard) sim_cfg.dense_guard = file_cfg.dense_guard;
        if (!*s_threads) sim_cfg.threads = file_cfg.threads;
        if (!*s_out) sim_cfg.out = file_cfg.out;
      }
      if (sim_cfg.instance_path.empty()) {
        std::cerr << "error: simulate requires --instance\n";
        return kExitConfig;
      }
      return cmd_simulate(sim_cfg);
    }
    if (ens->parsed()) {
      if (!config_path.empty()) {
        const EnsembleConfig file_cfg =
            EnsembleConfig::from_json_file(config_path);
        if (!*e_class) ens_cfg.coupling_class = file_cfg.coupling_class;
        if (!*e_width) ens_cfg.width = file_cfg.width;
        if (!*e_height) ens_cfg.height = file_cfg.height;
        if (!*e_count) ens_cfg.count = file_cfg.count;
        if (!*e_seed) ens_cfg.seed_base = file_cfg.seed_base;
        if (!*e_k) ens_cfg.degrees = file_cfg.degrees;
        if (!*e_ansatz) ens_cfg.ansatz = file_cfg.ansatz;
        if (!*e_td) ens_cfg.duration = file_cfg.duration;
        if (!*e_grid) ens_cfg.grid_points = file_cfg.grid_points;
        if (!*e_guard) ens_cfg.dense_guard = file_cfg.dense_guard;
        if (!*e_threads) ens_cfg.threads = file_cfg.threads;
        if (!*e_resume) ens_cfg.resume = file_cfg.resume;
        if (!*e_out) ens_cfg.out = file_cfg.out;
      }
      return cmd_ensemble(ens_cfg);
    }
    if (bench->parsed()) {
      if (!config_path.empty()) {
        const BenchConfig file_cfg = BenchConfig::from_json_file(config_path);
        if (!*b_k) bench_cfg.degrees = file_cfg.degrees;
        bench_cfg.ladders = file_cfg.ladders;
        if (!*b_tol) bench_cfg.slope_tolerance = file_cfg.slope_tolerance;
        if (!*b_seed) bench_cfg.seed = file_cfg.seed;
        if (!*b_threads) bench_cfg.threads = file_cfg.threads;
        if (!*b_cmp) bench_cfg.compare_kernels = file_cfg.compare_kernels;
        if (!*b_out) bench_cfg.out = file_cfg.out;
      }
      return cmd_bench(bench_cfg);
    }
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace wvcd::cli
