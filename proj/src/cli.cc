//
// Copyright 2026 The dp_partition Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "cli.hpp"

#include <sys/resource.h>
#include <sys/stat.h>

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "dp_partition/dp_partition.hpp"
#include "json.hpp"

namespace dp_partition {
namespace cli {
namespace {

using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

// Raised when a verification command finds a violation.
class VerificationFailed : public Error {
 public:
  using Error::Error;
};

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double PeakRssMegabytes() {
  struct rusage usage {};
  getrusage(RUSAGE_SELF, &usage);
  return static_cast<double>(usage.ru_maxrss) / 1024.0;  // KiB on Linux
}

// "a=1,b=2" -> {a: 1, b: 2}.
std::map<std::string, std::string> ParseKeyValues(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const auto eq = part.find('=');
    require(eq != std::string::npos && eq > 0,
            "expected key=value, got '" + part + "'");
    out[part.substr(0, eq)] = part.substr(eq + 1);
  }
  return out;
}

std::size_t ParseCount(const std::string& text) {
  // Accepts scientific notation such as 1e6.
  std::size_t pos = 0;
  double value = 0;
  try {
    value = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == text.size() && value >= 0 && value == std::floor(value) &&
              value < 1.8e19,
          "expected a non-negative integer, got '" + text + "'");
  return static_cast<std::size_t>(value);
}

std::vector<double> ParseDoubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(part, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    require(pos == part.size() && !part.empty(),
            "expected a number, got '" + part + "'");
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Data sources
// ---------------------------------------------------------------------------

struct InputOptions {
  std::string path;
  std::string format = "pairs-tsv";
  std::string synthetic;
};

void AddInputOptions(CLI::App* cmd, InputOptions& in, bool allow_synthetic) {
  cmd->add_option("-i,--input", in.path, "Input file");
  cmd->add_option("--format", in.format, "Input format")
      ->check(CLI::IsMember({"pairs-tsv", "docs-text"}))
      ->capture_default_str();
  if (allow_synthetic) {
    cmd->add_option("--synthetic", in.synthetic,
                    "Generate the input instead of reading it: "
                    "zipf:users=N,items=M[,seed=S,exponent=X,degree_min=D,"
                    "degree_max=D,degree_exponent=X] or gap:n=N,m=M[,seed=S]");
  }
}

struct LoadedInput {
  UserSetCollection data;
  DatasetManifest manifest;
  double seconds = 0;
};

UserSetCollection GenerateSynthetic(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  auto kv = ParseKeyValues(colon == std::string::npos ? ""
                                                      : spec.substr(colon + 1));
  const auto take = [&](const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    std::string value = it == kv.end() ? fallback : it->second;
    if (it != kv.end()) kv.erase(it);
    return value;
  };
  UserSetCollection data;
  if (kind == "zipf") {
    ZipfCorpusSpec z;
    z.users = ParseCount(take("users", "10000"));
    z.items = ParseCount(take("items", "100000"));
    z.seed = ParseCount(take("seed", "1"));
    z.item_exponent = std::stod(take("exponent", "1.1"));
    z.degree_min = ParseCount(take("degree_min", "4"));
    z.degree_max = ParseCount(take("degree_max", "1000"));
    z.degree_exponent = std::stod(take("degree_exponent", "2.5"));
    require(kv.empty(), "unknown zipf parameter '" +
                            (kv.empty() ? "" : kv.begin()->first) + "'");
    data = synth_zipf(z);
  } else if (kind == "gap") {
    const std::size_t n = ParseCount(take("n", "15000"));
    const std::size_t m = ParseCount(take("m", "1000"));
    const std::uint64_t seed = ParseCount(take("seed", "1"));
    require(kv.empty(), "unknown gap parameter '" +
                            (kv.empty() ? "" : kv.begin()->first) + "'");
    data = synth_gap_instance(n, m, seed);
  } else {
    throw InvalidArgument("unknown synthetic generator '" + kind + "'");
  }
  return data;
}

LoadedInput Load(const InputOptions& in) {
  require(in.path.empty() != in.synthetic.empty(),
          "exactly one of --input and --synthetic is required");
  const auto start = Clock::now();
  LoadedInput out;
  if (!in.synthetic.empty()) {
    out.data = GenerateSynthetic(in.synthetic);
    out.manifest = compute_manifest(out.data, {in.synthetic}, "synthetic");
  } else {
    out.data = in.format == "docs-text" ? tokenize_docs(in.path)
                                        : read_pairs_tsv(in.path);
    out.manifest = compute_manifest(out.data, {in.path}, in.format);
  }
  out.seconds = SecondsSince(start);
  return out;
}

Json ManifestJson(const DatasetManifest& m) {
  return Json{{"sources", m.sources},
              {"format", m.format},
              {"entries", m.entries},
              {"users", m.users},
              {"items", m.items}};
}

Json CoverageJson(const CoverageReport& r) {
  Json buckets = Json::array();
  for (const auto& b : r.buckets) {
    buckets.push_back(
        {{"min_frequency", b.min_frequency},
         {"max_frequency", b.max_frequency == 0 ? Json(nullptr)
                                                : Json(b.max_frequency)},
         {"total_items", b.total_items},
         {"selected_items", b.selected_items}});
  }
  return Json{{"buckets", buckets},
              {"user_coverage", r.user_coverage},
              {"entry_coverage", r.entry_coverage}};
}

// Opens `path` for writing; "-" is stdout.
class OutputFile {
 public:
  explicit OutputFile(const std::string& path) {
    if (path == "-") {
      stream_ = &std::cout;
    } else {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw IoError("cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& get() { return *stream_; }
  void close() {
    stream_->flush();
    if (!*stream_) throw IoError("write failure");
    if (file_.is_open()) file_.close();
  }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

void WriteJson(const std::string& path, const Json& json) {
  OutputFile out(path);
  out.get() << json.dump(2) << '\n';
  out.close();
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

struct BudgetOptions {
  double epsilon = 1.0;
  double delta = 1e-5;
  std::size_t delta0 = 100;
};

void AddBudgetOptions(CLI::App* cmd, BudgetOptions& b) {
  cmd->add_option("--epsilon", b.epsilon, "Total epsilon")
      ->capture_default_str();
  cmd->add_option("--delta", b.delta, "Total delta")->capture_default_str();
  cmd->add_option("--delta0", b.delta0, "Per-user degree cap")
      ->capture_default_str();
}

struct CalibrateOptions {
  BudgetOptions budget;
  double beta = 2.0;
  std::string profile = "inverse-sqrt";
  double scale = 1.0;
};

int RunCalibrate(const CalibrateOptions& o) {
  const SensitivityProfile h =
      o.profile == "constant" ? SensitivityProfile::constant(o.scale)
                              : SensitivityProfile::inverse_sqrt(o.scale);
  const PrivacyBudget budget(o.budget.epsilon, o.budget.delta);
  const CalibrationParams c = calibrate(budget, o.budget.delta0, h, o.beta);
  const Json out{{"epsilon", budget.epsilon},
                 {"delta", budget.delta},
                 {"delta0", o.budget.delta0},
                 {"beta", o.beta},
                 {"profile", h.describe()},
                 {"sigma", c.sigma},
                 {"rho", c.rho},
                 {"rho_argmax_t", c.rho_argmax_t},
                 {"tau", c.tau}};
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunOptions {
  InputOptions input;
  BudgetOptions budget;
  std::string algo = "mad";
  std::optional<double> beta;
  double d_max = 50;
  double b_min = 0.5;
  double b_max = 2.0;
  double c_lb = 1.0;
  double c_ub = 3.0;
  std::string split;
  std::optional<std::uint64_t> seed;
  bool benchmark = false;
  std::string output = "-";
  std::string metrics;
  std::string debug_noisy_weights;
  std::string max_entries = "5e8";
  std::size_t workers = 0;
  bool unsafe_parameters = false;
  bool skip_coverage = false;
};

std::uint64_t EntropySeed() {
  std::random_device rd;
  return (std::uint64_t{rd()} << 32) ^ rd();
}

std::vector<double> SplitFractions(const RunOptions& o) {
  if (!o.split.empty()) return ParseDoubles(o.split);
  return {0.1, 0.9};
}

SelectionResult Dispatch(const RunOptions& o, const UserSetCollection& data,
                         const RunSeed& seed, Json& params) {
  const PrivacyBudget budget(o.budget.epsilon, o.budget.delta);
  const std::size_t delta0 = o.budget.delta0;
  MadOptions mad_options;
  mad_options.unsafe_parameters = o.unsafe_parameters;
  params["epsilon"] = budget.epsilon;
  params["delta"] = budget.delta;
  params["delta0"] = delta0;

  if (o.algo == "basic" || o.algo == "mad") {
    const double beta = o.beta.value_or(o.algo == "mad" ? 2.0 : 0.0);
    params["beta"] = beta;
    if (o.algo == "basic") {
      return weight_and_threshold(data, budget, delta0, Weighter::basic(),
                                  SensitivityProfile::inverse_sqrt(1.0), beta,
                                  seed);
    }
    params["d_max"] = o.d_max;
    return weight_and_threshold(
        data, budget, delta0,
        Weighter::mad(AdaptiveConfig(o.d_max, 1.0), BiasMap(1.0, 1.0),
                      mad_options),
        SensitivityProfile::inverse_sqrt(1.0), beta, seed);
  }
  if (o.algo == "mad2r" || o.algo == "dp-sips") {
    const auto fractions = SplitFractions(o);
    params["split"] = fractions;
    const auto split = RoundBudgetSplit::from_fractions(budget, fractions);
    if (o.algo == "dp-sips") return dp_sips(data, split, delta0, seed);
    Mad2rParams p;
    p.delta0 = delta0;
    p.d_max = o.d_max;
    p.beta = o.beta.value_or(2.0);
    p.c_lb = o.c_lb;
    p.c_ub = o.c_ub;
    p.b_min = o.b_min;
    p.b_max = o.b_max;
    p.mad_options = mad_options;
    params["d_max"] = p.d_max;
    params["beta"] = p.beta;
    params["b_min"] = p.b_min;
    params["b_max"] = p.b_max;
    params["c_lb"] = p.c_lb;
    params["c_ub"] = p.c_ub;
    return mad2r(data, split, p, seed);
  }
  // Sequential baselines run on one thread; refuse inputs that would take
  // unreasonably long unless the guard is raised.
  const std::size_t max_entries = ParseCount(o.max_entries);
  require(data.num_entries() <= max_entries,
          o.algo + " is sequential; input has " +
              std::to_string(data.num_entries()) +
              " entries, above --max-entries " + o.max_entries);
  const double beta = o.beta.value_or(kSequentialDefaultBeta);
  params["beta"] = beta;
  params["note"] =
      "sequential baseline implemented from a one-line description of its "
      "update rule; normalization and tie-breaking may differ from the original";
  if (o.algo == "policy-gaussian") {
    return run_policy_gaussian(data, budget, delta0, seed, beta);
  }
  return run_greedy_update(data, budget, delta0, seed, beta);
}

int RunRun(const RunOptions& o) {
  if (o.benchmark) require(o.seed.has_value(), "--benchmark requires --seed");
  if (o.workers > 0) set_worker_count(o.workers);
  const auto total_start = Clock::now();
  LoadedInput loaded = Load(o.input);

  const RunSeed seed(o.seed.value_or(EntropySeed()));
  Json params = Json::object();
  params["algo"] = o.algo;
  const auto run_start = Clock::now();
  const SelectionResult result = Dispatch(o, loaded.data, seed, params);
  const double run_seconds = SecondsSince(run_start);

  const auto write_start = Clock::now();
  {
    OutputFile out(o.output);
    for (ItemId id : result.selected()) {
      out.get() << item_name(loaded.data, id) << '\n';
    }
    out.close();
  }
  if (!o.debug_noisy_weights.empty()) {
    std::cerr << "WARNING: --debug-noisy-weights writes the noisy weight of "
                 "every observed item. This file is NOT differentially "
                 "private and must not be released.\n";
    OutputFile out(o.debug_noisy_weights);
    const WeightMap& noisy = result.noisy_weights_nonprivate();
    out.get() << std::setprecision(17);
    for (ItemId id : noisy.keys()) {
      out.get() << item_name(loaded.data, id) << '\t' << noisy[id] << '\n';
    }
    out.close();
  }
  const double write_seconds = SecondsSince(write_start);

  std::string metrics_path = o.metrics;
  if (metrics_path.empty() && o.output != "-") {
    metrics_path = o.output + ".metrics.json";
  }
  if (!metrics_path.empty()) {
    const RunMetrics& m = result.metrics();
    Json rounds = Json::array();
    for (const auto& r : m.rounds) {
      rounds.push_back({{"epsilon", r.epsilon},
                        {"delta", r.delta},
                        {"sigma", r.sigma},
                        {"rho", r.rho},
                        {"rho_argmax_t", r.rho_argmax_t},
                        {"tau", r.tau},
                        {"input_entries", r.input_entries},
                        {"selected", r.selected}});
    }
    Json stages = Json::array();
    stages.push_back({{"stage", "load"},
                      {"seconds", loaded.seconds},
                      {"entries", loaded.manifest.entries},
                      {"entries_per_second",
                       loaded.seconds > 0
                           ? loaded.manifest.entries / loaded.seconds
                           : 0.0}});
    for (const auto& s : m.stages) {
      stages.push_back(
          {{"stage", s.stage},
           {"seconds", s.seconds},
           {"entries", s.entries},
           {"entries_per_second",
            s.seconds > 0 ? static_cast<double>(s.entries) / s.seconds : 0.0}});
    }
    Json metrics{
        {"output_size", m.output_size},
        {"parameters", params},
        // The seed is recorded only when supplied; an entropy seed would let
        // anyone holding the sidecar reconstruct the noise.
        {"seed", o.seed ? Json(*o.seed) : Json(nullptr)},
        {"benchmark", o.benchmark},
        {"workers", worker_count()},
        {"total_epsilon", m.total_epsilon},
        {"total_delta", m.total_delta},
        {"entries_processed", m.entries_processed},
        {"user_weight_loop_cap_hits", m.user_weight_loop_cap_hits},
        {"rounds", rounds},
        {"timings",
         {{"load_seconds", loaded.seconds},
          {"run_seconds", run_seconds},
          {"write_seconds", write_seconds},
          {"total_seconds", SecondsSince(total_start)}}},
        {"stages", stages},
        {"peak_rss_mb", PeakRssMegabytes()},
        {"manifest", ManifestJson(loaded.manifest)}};
    if (!o.skip_coverage) {
      metrics["coverage"] =
          CoverageJson(coverage_report(loaded.data, result.selected()));
    }
    WriteJson(metrics_path, metrics);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct SensitivityOptions {
  SweepGrid grid;
};

int RunVerifySensitivity(const SensitivityOptions& o) {
  const auto start = Clock::now();
  const SweepReport mad = run_sensitivity_sweep(o.grid);
  const BasicSweepReport basic = run_basic_sensitivity_sweep(o.grid);
  const bool basic_ok = basic.max_l2_error <= kSensitivitySlack &&
                        basic.max_linf_error <= kSensitivitySlack;
  const Json out{
      {"configurations", mad.configurations},
      {"base_datasets", mad.base_datasets},
      {"pairs", mad.pairs},
      {"max_l2", mad.max_l2},
      {"max_linf_ratio", mad.max_linf_ratio},
      {"l2_violations", mad.l2_violations},
      {"linf_violations", mad.linf_violations},
      {"monotonicity_violations", mad.monotonicity_violations},
      {"first_violation", mad.first_violation},
      {"basic_pairs", basic.pairs},
      {"basic_max_l2_error", basic.max_l2_error},
      {"basic_max_linf_error", basic.max_linf_error},
      {"seconds", SecondsSince(start)},
      {"passed", mad.ok() && basic_ok}};
  std::cout << out.dump(2) << '\n';
  if (!(mad.ok() && basic_ok)) throw VerificationFailed("sensitivity sweep");
  return kExitOk;
}

struct DominanceOptions {
  DominanceParams params;
  std::size_t instances = 50;
  std::uint64_t instance_seed = 1;
  bool with_gap = true;
};

int RunVerifyDominance(const DominanceOptions& o) {
  const auto start = Clock::now();
  std::vector<UserSetCollection> instances =
      random_small_instances(o.instances, o.instance_seed);
  if (o.with_gap) instances.push_back(synth_gap_instance(15000, 1000, 1));
  const DominanceReport r = dominance_harness(instances, o.params);
  Json failures = Json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"instance", f.instance},
                        {"item", index_of(f.item)},
                        {"weight_basic", f.weight_basic},
                        {"weight_mad", f.weight_mad},
                        {"freq_basic", f.freq_basic},
                        {"freq_mad", f.freq_mad}});
  }
  Json means = Json::array();
  for (const auto& [basic, mad] : r.mean_output) {
    means.push_back({{"basic", basic}, {"mad", mad}});
  }
  const Json out{{"instances", instances.size()},
                 {"trials", o.params.trials},
                 {"sigma", r.sigma},
                 {"rho", r.rho},
                 {"tau", r.tau},
                 {"phi_beta", r.phi_beta},
                 {"items_checked", r.items_checked},
                 {"statistical_failures", r.statistical_failures},
                 {"weight_failures", r.weight_failures},
                 {"failures", failures},
                 {"mean_output", means},
                 {"seconds", SecondsSince(start)},
                 {"passed", r.ok()}};
  std::cout << out.dump(2) << '\n';
  if (!r.ok()) throw VerificationFailed("stochastic dominance");
  return kExitOk;
}

struct CalibrationVerifyOptions {
  BudgetOptions budget;
  std::string t_grid = "1,2,10,50,100";
  std::string samples = "1e6";
  std::uint64_t seed = 1;
};

int RunVerifyCalibration(const CalibrationVerifyOptions& o) {
  const auto start = Clock::now();
  const PrivacyBudget budget(o.budget.epsilon, o.budget.delta);
  const SensitivityProfile h = SensitivityProfile::inverse_sqrt(1.0);
  const CalibrationParams c = calibrate(budget, o.budget.delta0, h, 0.0);
  // The solved sigma sits on the boundary of the mechanism condition.
  const double target = budget.delta / 2.0;
  const double achieved = gaussian_mechanism_delta(budget.epsilon, c.sigma);
  const double relative_slack = (target - achieved) / target;
  const bool boundary_ok = achieved <= target && relative_slack <= 1e-6;

  std::vector<std::size_t> grid;
  for (double t : ParseDoubles(o.t_grid)) {
    require(t >= 1 && t == std::floor(t), "t grid entries must be integers");
    grid.push_back(static_cast<std::size_t>(t));
  }
  const CalibrationMcReport mc = calibration_monte_carlo(
      c.sigma, c.rho, budget.delta, h, grid, ParseCount(o.samples), o.seed);
  Json checks = Json::array();
  for (const auto& k : mc.checks) {
    checks.push_back({{"t", k.t},
                      {"cutoff", k.cutoff},
                      {"probability", k.probability},
                      {"stderr", k.stderr_},
                      {"bound", k.bound},
                      {"passed", k.passed}});
  }
  const bool ok = boundary_ok && mc.ok();
  const Json out{{"sigma", c.sigma},
                 {"rho", c.rho},
                 {"target_delta", target},
                 {"achieved_delta", achieved},
                 {"relative_slack", relative_slack},
                 {"boundary_passed", boundary_ok},
                 {"monte_carlo", checks},
                 {"seconds", SecondsSince(start)},
                 {"passed", ok}};
  std::cout << out.dump(2) << '\n';
  if (!ok) throw VerificationFailed("calibration");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

struct StatsOptions {
  InputOptions input;
  bool strict = false;
  std::string manifest_cache;
};

// Source fingerprint used to validate a cached manifest.
Json Fingerprint(const std::string& path) {
  struct stat st {};
  if (::stat(path.c_str(), &st) != 0) throw IoError("cannot stat " + path);
  return Json{{"path", path},
              {"size", static_cast<std::uint64_t>(st.st_size)},
              {"mtime_ns", static_cast<std::int64_t>(st.st_mtim.tv_sec) *
                                   1000000000 +
                               st.st_mtim.tv_nsec}};
}

// Second, independent count straight from the file: a set of string pairs
// instead of the interning builder.
DatasetManifest Recount(const InputOptions& in) {
  std::ifstream file(in.path, std::ios::binary);
  if (!file) throw IoError("cannot open " + in.path);
  std::set<std::pair<std::string, std::string>> pairs;
  std::set<std::string> users;
  std::set<std::string> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(file, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string user = std::to_string(line_no++);
    if (in.format == "docs-text") {
      for (auto& token : tokenize(line)) {
        users.insert(user);
        items.insert(token);
        pairs.emplace(user, std::move(token));
      }
    } else if (!line.empty()) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;  // the primary pass rejects it
      users.insert(line.substr(0, tab));
      items.insert(line.substr(tab + 1));
      pairs.emplace(line.substr(0, tab), line.substr(tab + 1));
    }
  }
  DatasetManifest m;
  m.entries = pairs.size();
  m.users = users.size();
  m.items = items.size();
  return m;
}

int RunStats(const StatsOptions& o) {
  require(!o.input.path.empty(), "stats requires --input");
  const Json fingerprint = Fingerprint(o.input.path);
  if (!o.strict && !o.manifest_cache.empty() &&
      std::filesystem::exists(o.manifest_cache)) {
    std::ifstream cached(o.manifest_cache);
    const Json doc = Json::parse(cached, nullptr, /*allow_exceptions=*/false);
    if (doc.is_object() && doc.contains("fingerprint") &&
        doc["fingerprint"] == fingerprint && doc.value("format", "") ==
                                                 o.input.format) {
      Json out = doc;
      out["from_cache"] = true;
      std::cout << out.dump(2) << '\n';
      return kExitOk;
    }
  }
  const LoadedInput loaded = Load(o.input);
  Json out = ManifestJson(loaded.manifest);
  out["fingerprint"] = fingerprint;
  out["from_cache"] = false;
  if (o.strict) {
    const DatasetManifest again = Recount(o.input);
    const bool same = again.entries == loaded.manifest.entries &&
                      again.users == loaded.manifest.users &&
                      again.items == loaded.manifest.items;
    out["recount_matches"] = same;
    if (!same) {
      std::cout << out.dump(2) << '\n';
      throw VerificationFailed("manifest recount mismatch");
    }
  }
  std::vector<std::size_t> buckets(5, 0);
  const auto report = coverage_report(loaded.data, {});
  for (std::size_t b = 0; b < report.buckets.size(); ++b) {
    buckets[b] = report.buckets[b].total_items;
  }
  out["items_per_frequency_bucket"] = buckets;
  out["max_degree"] = loaded.data.max_degree();
  if (!o.manifest_cache.empty()) {
    Json cache = out;
    cache.erase("from_cache");
    WriteJson(o.manifest_cache, cache);
  }
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth-gap, synth-zipf, coverage
// ---------------------------------------------------------------------------

struct SynthGapOptions {
  std::size_t n = 15000;
  std::size_t m = 1000;
  std::uint64_t seed = 1;
  std::string output = "-";
};

int RunSynthGap(const SynthGapOptions& o) {
  const auto data = synth_gap_instance(o.n, o.m, o.seed);
  OutputFile out(o.output);
  write_pairs_tsv(data, out.get());
  out.close();
  return kExitOk;
}

struct SynthZipfOptions {
  ZipfCorpusSpec spec;
  std::string output = "-";
};

int RunSynthZipf(const SynthZipfOptions& o) {
  const auto data = synth_zipf(o.spec);
  OutputFile out(o.output);
  write_pairs_tsv(data, out.get());
  out.close();
  return kExitOk;
}

struct CoverageOptions {
  InputOptions input;
  std::string selected;
};

int RunCoverage(const CoverageOptions& o) {
  const LoadedInput loaded = Load(o.input);
  std::ifstream file(o.selected, std::ios::binary);
  if (!file) throw IoError("cannot open " + o.selected);
  const auto& names = loaded.data.dictionary()->names();
  std::vector<ItemId> selected;
  std::string line;
  while (std::getline(file, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    // Dictionary names are sorted, so ids are found by binary search.
    const auto it = std::lower_bound(names.begin(), names.end(), line);
    require(it != names.end() && *it == line,
            "selected item '" + line + "' is not in the input");
    selected.push_back(item_id(static_cast<std::size_t>(it - names.begin())));
  }
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()),
                 selected.end());
  Json out = CoverageJson(coverage_report(loaded.data, selected));
  out["selected_items"] = selected.size();
  out["manifest"] = ManifestJson(loaded.manifest);
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int Main(int argc, char** argv) {
  CLI::App app{"Differentially private partition selection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dp_partition 0.1.0");
  int code = kExitOk;

  CalibrateOptions calibrate_opts;
  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "Print sigma, rho and tau");
  AddBudgetOptions(calibrate_cmd, calibrate_opts.budget);
  calibrate_cmd->add_option("--beta", calibrate_opts.beta)
      ->capture_default_str();
  calibrate_cmd->add_option("--profile", calibrate_opts.profile)
      ->check(CLI::IsMember({"inverse-sqrt", "constant"}))
      ->capture_default_str();
  calibrate_cmd->add_option("--scale", calibrate_opts.scale,
                            "Profile scale (b_max for biased MAD)")
      ->capture_default_str();
  calibrate_cmd->callback([&] { code = RunCalibrate(calibrate_opts); });

  RunOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "Select items privately");
  AddInputOptions(run_cmd, run_opts.input, /*allow_synthetic=*/true);
  AddBudgetOptions(run_cmd, run_opts.budget);
  run_cmd->add_option("--algo", run_opts.algo)
      ->check(CLI::IsMember({"basic", "mad", "mad2r", "dp-sips",
                             "policy-gaussian", "greedy-update"}))
      ->capture_default_str();
  run_cmd->add_option("--beta", run_opts.beta,
                      "Threshold offset in sigmas (default 2 for MAD and "
                      "MAD2R, 0 for Basic, 4 for the sequential baselines)");
  run_cmd->add_option("--d-max", run_opts.d_max)->capture_default_str();
  run_cmd->add_option("--b-min", run_opts.b_min)->capture_default_str();
  run_cmd->add_option("--b-max", run_opts.b_max)->capture_default_str();
  run_cmd->add_option("--c-lb", run_opts.c_lb)->capture_default_str();
  run_cmd->add_option("--c-ub", run_opts.c_ub)->capture_default_str();
  run_cmd->add_option("--split", run_opts.split,
                      "Per-round budget fractions for mad2r and dp-sips "
                      "(default 0.1,0.9)");
  run_cmd->add_option("--seed", run_opts.seed,
                      "Master seed (defaults to OS entropy)");
  run_cmd->add_flag("--benchmark", run_opts.benchmark,
                    "Reproducible benchmark run; requires --seed");
  run_cmd->add_option("-o,--output", run_opts.output,
                      "Selected items, one per line")
      ->capture_default_str();
  run_cmd->add_option("--metrics", run_opts.metrics,
                      "JSON metrics sidecar (default <output>.metrics.json)");
  run_cmd->add_option("--debug-noisy-weights", run_opts.debug_noisy_weights,
                      "Write every noisy weight (NOT private)");
  run_cmd->add_option("--max-entries", run_opts.max_entries,
                      "Input size guard for the sequential baselines")
      ->capture_default_str();
  run_cmd->add_option("--workers", run_opts.workers,
                      "Worker threads (overrides DP_PARTITION_WORKERS)");
  run_cmd->add_flag("--unsafe-parameters", run_opts.unsafe_parameters,
                    "Allow d_max below the safe range (no privacy guarantee)");
  run_cmd->add_flag("--skip-coverage", run_opts.skip_coverage,
                    "Omit the coverage report from the sidecar");
  run_cmd->callback([&] { code = RunRun(run_opts); });

  auto* verify_cmd = app.add_subcommand("verify", "Run a verification harness");
  verify_cmd->require_subcommand(1);

  SensitivityOptions sens_opts;
  auto* sens_cmd = verify_cmd->add_subcommand(
      "sensitivity", "Exhaustive neighbor-pair sensitivity sweep");
  sens_cmd->add_option("--base-items", sens_opts.grid.base_items)
      ->capture_default_str();
  sens_cmd->add_option("--max-base-users", sens_opts.grid.max_base_users)
      ->capture_default_str();
  sens_cmd->add_option("--max-novel", sens_opts.grid.max_novel)
      ->capture_default_str();
  sens_cmd->callback([&] { code = RunVerifySensitivity(sens_opts); });

  DominanceOptions dom_opts;
  auto* dom_cmd = verify_cmd->add_subcommand(
      "dominance", "MAD versus Basic selection frequencies");
  dom_cmd->add_option("--instances", dom_opts.instances)->capture_default_str();
  dom_cmd->add_option("--instance-seed", dom_opts.instance_seed)
      ->capture_default_str();
  dom_cmd->add_option("--trials", dom_opts.params.trials)
      ->capture_default_str();
  dom_cmd->add_option("--seed", dom_opts.params.seed)->capture_default_str();
  dom_cmd->add_option("--d-max", dom_opts.params.d_max)->capture_default_str();
  dom_cmd->add_option("--beta", dom_opts.params.beta)->capture_default_str();
  dom_cmd->add_option("--epsilon", dom_opts.params.budget.epsilon)
      ->capture_default_str();
  dom_cmd->add_option("--delta", dom_opts.params.budget.delta)
      ->capture_default_str();
  dom_cmd->add_option("--delta0", dom_opts.params.delta0)
      ->capture_default_str();
  dom_cmd->add_flag("!--no-gap", dom_opts.with_gap,
                    "Leave out the heavy/light gap instance");
  dom_cmd->callback([&] { code = RunVerifyDominance(dom_opts); });

  CalibrationVerifyOptions cal_opts;
  auto* cal_cmd = verify_cmd->add_subcommand(
      "calibration", "Boundary check and Monte Carlo check of rho");
  AddBudgetOptions(cal_cmd, cal_opts.budget);
  cal_cmd->add_option("--t-grid", cal_opts.t_grid)->capture_default_str();
  cal_cmd->add_option("--samples", cal_opts.samples)->capture_default_str();
  cal_cmd->add_option("--seed", cal_opts.seed)->capture_default_str();
  cal_cmd->callback([&] { code = RunVerifyCalibration(cal_opts); });

  StatsOptions stats_opts;
  auto* stats_cmd = app.add_subcommand("stats", "Dataset manifest");
  AddInputOptions(stats_cmd, stats_opts.input, /*allow_synthetic=*/false);
  stats_cmd->add_flag("--strict", stats_opts.strict,
                      "Ignore the cache and verify counts with a second pass");
  stats_cmd->add_option("--manifest", stats_opts.manifest_cache,
                        "Manifest cache file");
  stats_cmd->callback([&] { code = RunStats(stats_opts); });

  SynthGapOptions gap_opts;
  auto* gap_cmd = app.add_subcommand(
      "synth-gap", "Write the heavy/light gap instance as pairs TSV");
  gap_cmd->add_option("--n", gap_opts.n, "Users")->capture_default_str();
  gap_cmd->add_option("--m", gap_opts.m, "Light items")->capture_default_str();
  gap_cmd->add_option("--seed", gap_opts.seed)->capture_default_str();
  gap_cmd->add_option("-o,--output", gap_opts.output)->capture_default_str();
  gap_cmd->callback([&] { code = RunSynthGap(gap_opts); });

  SynthZipfOptions zipf_opts;
  auto* zipf_cmd = app.add_subcommand(
      "synth-zipf", "Write a power-law corpus as pairs TSV");
  zipf_cmd->add_option("--users", zipf_opts.spec.users)->capture_default_str();
  zipf_cmd->add_option("--items", zipf_opts.spec.items)->capture_default_str();
  zipf_cmd->add_option("--exponent", zipf_opts.spec.item_exponent)
      ->capture_default_str();
  zipf_cmd->add_option("--degree-min", zipf_opts.spec.degree_min)
      ->capture_default_str();
  zipf_cmd->add_option("--degree-max", zipf_opts.spec.degree_max)
      ->capture_default_str();
  zipf_cmd->add_option("--degree-exponent", zipf_opts.spec.degree_exponent)
      ->capture_default_str();
  zipf_cmd->add_option("--seed", zipf_opts.spec.seed)->capture_default_str();
  zipf_cmd->add_option("-o,--output", zipf_opts.output)->capture_default_str();
  zipf_cmd->callback([&] { code = RunSynthZipf(zipf_opts); });

  CoverageOptions cov_opts;
  auto* cov_cmd = app.add_subcommand(
      "coverage", "Coverage of a selected-item file over a dataset");
  AddInputOptions(cov_cmd, cov_opts.input, /*allow_synthetic=*/true);
  cov_cmd->add_option("--selected", cov_opts.selected, "Selected items file")
      ->required();
  cov_cmd->callback([&] { code = RunCoverage(cov_opts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const VerificationFailed& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return kExitVerificationFailed;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return code;
}

}  // namespace cli
}  // namespace dp_partition
