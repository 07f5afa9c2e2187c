// Copyright 2026 The Reload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RELOAD_HARNESS_HPP_
#define RELOAD_HARNESS_HPP_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "reload/baselines.hpp"
#include "reload/common.hpp"
#include "reload/dataset.hpp"
#include "reload/init.hpp"
#include "reload/metrics.hpp"
#include "reload/model.hpp"
#include "reload/reload.hpp"
#include "reload/training.hpp"

namespace reload {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Scenario description.

struct DatasetConfig {
  std::string kind = "gaussian-blobs";  // synthetic kind, "shapes" or "csv"
  std::size_t n = 600;
  std::size_t test_n = 300;
  std::size_t classes = 4;
  std::size_t dim = 2;
  std::size_t size = 16;
  std::size_t channels = 1;
  double noise = 0.5;
  std::string path;
  std::string test_path;
};

struct SplitConfig {
  std::string kind = "random";  // "random" or "class"
  double fraction = 0.1;
  std::int32_t class_id = 0;
  std::optional<std::size_t> count;  // class split: all members when unset
};

struct CorruptionConfig {
  CorruptionKind kind = CorruptionKind::kBackdoorPoison;
  std::int32_t source_class = -1;
  std::int32_t target_class = 0;
  std::size_t count = 100;
  std::size_t patch_side = 3;
  float patch_value = 1.0f;
  std::size_t patch_row = 0;
  std::size_t patch_col = 0;
  double noise_std = 1.0;
  bool with_replacement = false;
};

struct MethodConfig {
  Method method = Method::kReload;
  std::string label;
  ReloadConfig reload;
  TrainConfig train;
  std::size_t k = 1;
  ResetScheme reset_scheme = ResetScheme::kXavierUniform;
  std::size_t ga_steps = 5;
  double ga_lr = 0.01;
};

struct Scenario {
  std::string name = "scenario";
  std::string mode = "classical";  // or "corrective"
  std::string description;
  DatasetConfig data;
  std::string arch;
  TrainConfig train;
  Precision snapshot_precision = Precision::kF32;
  SplitConfig split;
  std::optional<CorruptionConfig> corruption;
  std::vector<double> gammas = {0.1, 0.2, 0.3, 0.4, 0.5,
                                0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<MethodConfig> methods;
  std::vector<std::uint64_t> seeds = {1};
  bool mia = true;
  std::string output;

  ArchSpec arch_spec() const;
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> keys,
                       const std::string& where) {
  if (!j.is_object()) throw Error(where + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || item.key() == k;
    if (!known) throw Error(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(where + "." + key + ": " + e.what());
  }
}

inline TrainConfig parse_train(const json& j, TrainConfig base,
                               const std::string& where) {
  check_keys(j,
             {"epochs", "batch_size", "learning_rate", "momentum",
              "weight_decay", "shuffle", "early_stop", "lr_step_epochs",
              "lr_step_gamma"},
             where);
  read(j, "epochs", base.epochs, where);
  read(j, "batch_size", base.batch_size, where);
  read(j, "learning_rate", base.learning_rate, where);
  read(j, "momentum", base.momentum, where);
  read(j, "weight_decay", base.weight_decay, where);
  read(j, "shuffle", base.shuffle, where);
  read(j, "lr_step_epochs", base.lr_step_epochs, where);
  read(j, "lr_step_gamma", base.lr_step_gamma, where);
  if (j.contains("early_stop")) {
    const json& es = j.at("early_stop");
    if (es.is_boolean()) {
      base.early_stop = es.get<bool>() ? std::optional(EarlyStopping{})
                                       : std::nullopt;
    } else {
      EarlyStopping stop;
      check_keys(es, {"min_delta", "patience"}, where + ".early_stop");
      read(es, "min_delta", stop.min_delta, where + ".early_stop");
      read(es, "patience", stop.patience, where + ".early_stop");
      base.early_stop = stop;
    }
  }
  base.validate();
  return base;
}

inline MethodConfig parse_method_config(const json& j, const Scenario& s,
                                        const std::string& where) {
  MethodConfig m;
  m.train = s.train;
  m.reload.finetune = s.train;
  m.ga_lr = s.train.learning_rate / 10;
  if (j.is_string()) {
    m.method = parse_method(j.get<std::string>());
    m.label = std::string(to_string(m.method));
    return m;
  }
  if (!j.is_object() || !j.contains("method")) {
    throw Error(where + ": expected a method name or an object with 'method'");
  }
  m.method = parse_method(j.at("method").get<std::string>());
  m.label = std::string(to_string(m.method));
  read(j, "label", m.label, where);
  std::string text;
  switch (m.method) {
    case Method::kOriginal:
    case Method::kRetrain:
      check_keys(j, {"method", "label"}, where);
      break;
    case Method::kReload: {
      check_keys(j,
                 {"method", "label", "alpha", "eta_p", "epsilon",
                  "reset_scheme", "variant", "retain_subset",
                  "kv_at_theta_prime", "reinit", "finetune"},
                 where);
      ReloadConfig& r = m.reload;
      read(j, "alpha", r.alpha, where);
      read(j, "eta_p", r.eta_p, where);
      read(j, "epsilon", r.epsilon, where);
      read(j, "retain_subset", r.retain_subset_fraction, where);
      read(j, "kv_at_theta_prime", r.kv_at_theta_prime, where);
      read(j, "reinit", r.reinit_enabled, where);
      if (j.contains("reset_scheme")) {
        r.reset_scheme =
            parse_reset_scheme(j.at("reset_scheme").get<std::string>());
      }
      if (j.contains("variant")) {
        r.variant = parse_variant(j.at("variant").get<std::string>());
      }
      if (j.contains("finetune")) {
        r.finetune = parse_train(j.at("finetune"), s.train, where + ".finetune");
      }
      r.validate();
      break;
    }
    case Method::kGa:
      check_keys(j, {"method", "label", "steps", "lr"}, where);
      read(j, "steps", m.ga_steps, where);
      read(j, "lr", m.ga_lr, where);
      break;
    case Method::kFt:
    case Method::kCfk:
    case Method::kEuk:
      check_keys(j, {"method", "label", "k", "reset_scheme", "train"}, where);
      read(j, "k", m.k, where);
      if (j.contains("reset_scheme")) {
        m.reset_scheme =
            parse_reset_scheme(j.at("reset_scheme").get<std::string>());
      }
      if (j.contains("train")) {
        m.train = parse_train(j.at("train"), s.train, where + ".train");
      }
      break;
  }
  return m;
}

}  // namespace detail

inline ArchSpec Scenario::arch_spec() const {
  Shape3 input{data.dim, 1, 1};
  if (data.kind == "shapes") input = {data.channels, data.size, data.size};
  return ArchSpec::parse(input, arch);
}

inline Scenario parse_scenario(const json& j) {
  detail::check_keys(j,
                     {"name", "mode", "description", "dataset", "arch",
                      "train", "snapshot_precision", "split", "corruption",
                      "gammas", "methods", "seeds", "mia", "output"},
                     "scenario");
  Scenario s;
  detail::read(j, "name", s.name, "scenario");
  detail::read(j, "mode", s.mode, "scenario");
  detail::read(j, "description", s.description, "scenario");
  detail::read(j, "arch", s.arch, "scenario");
  detail::read(j, "mia", s.mia, "scenario");
  detail::read(j, "output", s.output, "scenario");
  if (s.mode != "classical" && s.mode != "corrective") {
    throw Error("scenario.mode: expected 'classical' or 'corrective'");
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    const std::string w = "scenario.dataset";
    detail::check_keys(d,
                       {"kind", "n", "test_n", "classes", "dim", "size",
                        "channels", "noise", "path", "test_path"},
                       w);
    DatasetConfig& c = s.data;
    detail::read(d, "kind", c.kind, w);
    detail::read(d, "n", c.n, w);
    detail::read(d, "test_n", c.test_n, w);
    detail::read(d, "classes", c.classes, w);
    detail::read(d, "dim", c.dim, w);
    detail::read(d, "size", c.size, w);
    detail::read(d, "channels", c.channels, w);
    detail::read(d, "noise", c.noise, w);
    detail::read(d, "path", c.path, w);
    detail::read(d, "test_path", c.test_path, w);
    if (c.kind != "shapes" && c.kind != "csv") parse_synthetic_kind(c.kind);
    if (c.kind == "two-moons") c.dim = 2;
  }
  if (j.contains("train")) {
    s.train = detail::parse_train(j.at("train"), s.train, "scenario.train");
  }
  if (j.contains("snapshot_precision")) {
    const std::string p = j.at("snapshot_precision").get<std::string>();
    if (p == "f16") {
      s.snapshot_precision = Precision::kF16;
    } else if (p != "f32") {
      throw Error("scenario.snapshot_precision: expected 'f32' or 'f16'");
    }
  }
  if (j.contains("split")) {
    const json& sp = j.at("split");
    const std::string w = "scenario.split";
    detail::check_keys(sp, {"kind", "fraction", "class", "count"}, w);
    detail::read(sp, "kind", s.split.kind, w);
    detail::read(sp, "fraction", s.split.fraction, w);
    detail::read(sp, "class", s.split.class_id, w);
    if (sp.contains("count")) s.split.count = sp.at("count").get<std::size_t>();
    if (s.split.kind != "random" && s.split.kind != "class") {
      throw Error(w + ".kind: expected 'random' or 'class'");
    }
  }
  if (j.contains("corruption")) {
    const json& cj = j.at("corruption");
    const std::string w = "scenario.corruption";
    detail::check_keys(cj,
                       {"kind", "source", "target", "count", "patch_side",
                        "patch_value", "patch_row", "patch_col", "noise_std",
                        "with_replacement"},
                       w);
    CorruptionConfig c;
    if (cj.contains("kind")) {
      c.kind = parse_corruption_kind(cj.at("kind").get<std::string>());
    }
    detail::read(cj, "source", c.source_class, w);
    detail::read(cj, "target", c.target_class, w);
    detail::read(cj, "count", c.count, w);
    detail::read(cj, "patch_side", c.patch_side, w);
    detail::read(cj, "patch_value", c.patch_value, w);
    detail::read(cj, "patch_row", c.patch_row, w);
    detail::read(cj, "patch_col", c.patch_col, w);
    detail::read(cj, "noise_std", c.noise_std, w);
    detail::read(cj, "with_replacement", c.with_replacement, w);
    s.corruption = c;
  }
  detail::read(j, "gammas", s.gammas, "scenario");
  detail::read(j, "seeds", s.seeds, "scenario");
  if (j.contains("methods")) {
    const json& ms = j.at("methods");
    if (!ms.is_array()) throw Error("scenario.methods: expected an array");
    for (std::size_t i = 0; i < ms.size(); ++i) {
      s.methods.push_back(detail::parse_method_config(
          ms[i], s, "scenario.methods[" + std::to_string(i) + "]"));
    }
  }
  if (s.methods.empty()) throw Error("scenario: at least one method is needed");
  if (s.seeds.empty()) throw Error("scenario: at least one seed is needed");
  if (s.arch.empty()) throw Error("scenario: 'arch' is required");
  if (s.mode == "corrective") {
    if (!s.corruption) throw Error("corrective scenario needs 'corruption'");
    if (s.gammas.empty()) throw Error("corrective scenario needs gammas");
    for (double g : s.gammas) {
      if (!(g > 0 && g <= 1)) throw Error("scenario.gammas: values in (0, 1]");
    }
  }
  s.arch_spec();  // validates the architecture string
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  return parse_scenario(j);
}

// ---------------------------------------------------------------------------
// Reports.

struct EvalReport {
  std::string scenario;
  std::string mode;
  std::string method;
  std::uint64_t seed = 0;
  std::optional<double> gamma;
  bool ok = true;
  std::string error;
  bool partially_blind = true;
  std::size_t retain_size = 0;
  std::size_t forget_size = 0;
  std::optional<double> ra, fa, fe, fmia, test_acc;
  std::optional<double> delta_fa, delta_fe, delta_fmia, rskl, fskl;
  std::optional<double> cost, acc_corr, acc_retain, mask_fraction;
  std::optional<std::string> mia_warning;
  double seconds = 0;  // wall clock, not part of the determinism contract
};

struct MetricField {
  const char* name;
  std::optional<double> EvalReport::*field;
};

// Column order of both output formats.
inline constexpr MetricField kMetricFields[] = {
    {"ra", &EvalReport::ra},
    {"fa", &EvalReport::fa},
    {"fe", &EvalReport::fe},
    {"fmia", &EvalReport::fmia},
    {"test_acc", &EvalReport::test_acc},
    {"delta_fa", &EvalReport::delta_fa},
    {"delta_fe", &EvalReport::delta_fe},
    {"delta_fmia", &EvalReport::delta_fmia},
    {"rskl", &EvalReport::rskl},
    {"fskl", &EvalReport::fskl},
    {"cost", &EvalReport::cost},
    {"acc_corr", &EvalReport::acc_corr},
    {"acc_retain", &EvalReport::acc_retain},
    {"mask_fraction", &EvalReport::mask_fraction},
};

inline json to_json(const EvalReport& r) {
  json j;
  j["scenario"] = r.scenario;
  j["mode"] = r.mode;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["gamma"] = r.gamma ? json(*r.gamma) : json(nullptr);
  j["status"] = r.ok ? "ok" : "failed";
  j["error"] = r.error;
  j["partially_blind"] = r.partially_blind;
  j["retain_size"] = r.retain_size;
  j["forget_size"] = r.forget_size;
  for (const MetricField& m : kMetricFields) {
    const auto& v = r.*m.field;
    j[m.name] = v ? json(*v) : json(nullptr);
  }
  j["mia_warning"] = r.mia_warning ? json(*r.mia_warning) : json(nullptr);
  j["seconds"] = r.seconds;
  return j;
}

inline EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    r.scenario = j.at("scenario").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("gamma").is_null()) r.gamma = j.at("gamma").get<double>();
    r.ok = j.at("status").get<std::string>() == "ok";
    r.error = j.at("error").get<std::string>();
    r.partially_blind = j.at("partially_blind").get<bool>();
    r.retain_size = j.at("retain_size").get<std::size_t>();
    r.forget_size = j.at("forget_size").get<std::size_t>();
    for (const MetricField& m : kMetricFields) {
      if (j.contains(m.name) && !j.at(m.name).is_null()) {
        r.*m.field = j.at(m.name).get<double>();
      }
    }
    if (j.contains("mia_warning") && !j.at("mia_warning").is_null()) {
      r.mia_warning = j.at("mia_warning").get<std::string>();
    }
    if (j.contains("seconds")) r.seconds = j.at("seconds").get<double>();
  } catch (const json::exception& e) {
    throw Error(std::string("bad report record: ") + e.what());
  }
  return r;
}

inline void write_jsonl(const std::vector<EvalReport>& reports,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const EvalReport& r : reports) out << to_json(r).dump() << '\n';
}

inline std::vector<EvalReport> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<EvalReport> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(report_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

struct MeanStd {
  double mean = 0;
  double stddev = 0;  // sample standard deviation, 0 for a single value
  std::size_t count = 0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd r;
  r.count = xs.size();
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

// One row per (scenario, mode, method, gamma) in order of first appearance:
//   scenario,mode,method,gamma,runs,failed,<metric>_mean,<metric>_std,...
// Failed runs are counted but not averaged.
inline std::string aggregate_csv(const std::vector<EvalReport>& reports) {
  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "scenario,mode,method,gamma,runs,failed";
  for (const MetricField& m : kMetricFields) {
    out << ',' << m.name << "_mean," << m.name << "_std";
  }
  out << '\n';
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<const EvalReport*>> groups;
  for (const EvalReport& r : reports) {
    Key key{r.scenario, r.mode, r.method, r.gamma ? fmt(*r.gamma) : ""};
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  for (const Key& key : order) {
    const auto& rows = groups[key];
    std::size_t failed = 0;
    for (const EvalReport* r : rows) failed += r->ok ? 0 : 1;
    out << std::get<0>(key) << ',' << std::get<1>(key) << ','
        << std::get<2>(key) << ',' << std::get<3>(key) << ',' << rows.size()
        << ',' << failed;
    for (const MetricField& m : kMetricFields) {
      std::vector<double> xs;
      for (const EvalReport* r : rows) {
        if (r->ok && (r->*m.field)) xs.push_back(*(r->*m.field));
      }
      if (xs.empty()) {
        out << ",,";
      } else {
        const MeanStd ms = mean_std(xs);
        out << ',' << fmt(ms.mean) << ',' << fmt(ms.stddev);
      }
    }
    out << '\n';
  }
  return out.str();
}

// Writes results.jsonl and summary.csv into dir.
inline void emit_report(const std::vector<EvalReport>& reports,
                        const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_jsonl(reports, (std::filesystem::path(dir) / "results.jsonl").string());
  std::ofstream csv(std::filesystem::path(dir) / "summary.csv");
  if (!csv) throw Error("cannot write summary.csv in '" + dir + "'");
  csv << aggregate_csv(reports);
}

// ---------------------------------------------------------------------------
// Data access for unlearning methods.

// A dataset the caller may or may not be allowed to read. Partially-blind
// methods receive a sealed forget handle; any read throws AccessError.
class DataHandle {
 public:
  static DataHandle open(const Dataset* data, std::string what) {
    DataHandle h;
    h.data_ = data;
    h.what_ = std::move(what);
    return h;
  }
  static DataHandle sealed(std::string what, std::string reason) {
    DataHandle h;
    h.what_ = std::move(what);
    h.reason_ = std::move(reason);
    return h;
  }

  bool available() const { return data_ != nullptr; }
  const Dataset& get() const {
    if (!data_) throw AccessError(what_ + " is not accessible: " + reason_);
    return *data_;
  }
  std::size_t size() const { return get().size(); }

 private:
  const Dataset* data_ = nullptr;
  std::string what_;
  std::string reason_;
};

// Everything an unlearning method may see.
struct UnlearnInputs {
  const ModelState* model = nullptr;
  const GradientSnapshot* snapshot = nullptr;
  DataHandle retain;
  DataHandle forget;
};

inline UnlearnInputs make_inputs(Method method, const ModelState& model,
                                 const GradientSnapshot& snapshot,
                                 const Dataset& retain, const Dataset& forget) {
  UnlearnInputs in;
  in.model = &model;
  in.snapshot = &snapshot;
  in.retain = DataHandle::open(&retain, "retain set");
  in.forget = is_partially_blind(method)
                  ? DataHandle::sealed("forget set",
                                       std::string(to_string(method)) +
                                           " is partially blind")
                  : DataHandle::open(&forget, "forget set");
  return in;
}

struct MethodOutcome {
  ModelState model;
  double seconds = 0;
  std::optional<double> mask_fraction;
};

// Runs one method through the shared timing wrapper. `reference` is the
// retrained model and its time, reused for the retrain method.
inline MethodOutcome run_method(const MethodConfig& cfg,
                                const UnlearnInputs& in, std::uint64_t seed,
                                const TrainResult& reference,
                                double reference_seconds) {
  using Clock = std::chrono::steady_clock;
  MethodOutcome out;
  const auto t0 = Clock::now();
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = mix_seed(seed, 31);
  switch (cfg.method) {
    case Method::kOriginal:
      out.model = *in.model;
      break;
    case Method::kRetrain:
      out.model = reference.model;
      out.seconds = reference_seconds;
      return out;
    case Method::kReload: {
      ReloadConfig rc = cfg.reload;
      rc.seed = mix_seed(seed, 41);
      rc.finetune.seed = mix_seed(seed, 42);
      ReloadResult r = run_reload(*in.model, *in.snapshot, in.retain.get(), rc);
      out.mask_fraction = static_cast<double>(r.kv.selected()) /
                          static_cast<double>(r.kv.mask.size());
      out.model = std::move(r.model);
      break;
    }
    case Method::kGa:
      out.model = ga_unlearn(*in.model, in.forget.get(), cfg.ga_steps, cfg.ga_lr);
      break;
    case Method::kFt:
      out.model = ft_unlearn(*in.model, in.retain.get(), train_cfg).model;
      break;
    case Method::kCfk:
      out.model =
          cfk_unlearn(*in.model, in.retain.get(), cfg.k, train_cfg).model;
      break;
    case Method::kEuk:
      out.model = euk_unlearn(*in.model, in.retain.get(), cfg.k,
                              cfg.reset_scheme, train_cfg, mix_seed(seed, 51))
                      .model;
      break;
  }
  out.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Scenario execution.

inline Dataset make_scenario_data(const DatasetConfig& c, std::size_t n,
                                  std::uint64_t seed, bool test) {
  if (c.kind == "shapes") {
    return make_shapes(n, c.classes, c.size, c.channels, c.noise, seed);
  }
  if (c.kind == "csv") {
    const std::string& p = test ? c.test_path : c.path;
    if (p.empty()) throw Error("csv dataset needs 'path' and 'test_path'");
    return load_csv(p, c.classes);
  }
  return make_synthetic(parse_synthetic_kind(c.kind), n, c.classes, c.noise,
                        seed, c.dim);
}

struct SeedData {
  Dataset train;
  Dataset test;
};

inline SeedData scenario_data(const Scenario& s, std::uint64_t seed) {
  return {make_scenario_data(s.data, s.data.n, mix_seed(seed, 1), false),
          make_scenario_data(s.data, s.data.test_n, mix_seed(seed, 2), true)};
}

inline TrainConfig original_train_config(const Scenario& s,
                                         std::uint64_t seed) {
  TrainConfig c = s.train;
  c.seed = mix_seed(seed, 21);
  return c;
}

inline std::uint64_t init_seed(std::uint64_t seed) { return mix_seed(seed, 22); }

inline GradientSnapshot make_snapshot(const ModelState& model,
                                      const Dataset& data, Precision p) {
  GradientSnapshot snap = snapshot_full_gradient(model, data);
  return p == Precision::kF16 ? quantize_snapshot(snap) : snap;
}

struct Reference {
  const ModelState* model;
  const Dataset* retain;
  const Dataset* forget;
  const Dataset* test;
  double ra, fa, fe, fmia;
  double seconds;
};

struct Timed {
  TrainResult result;
  double seconds;
};

inline Timed timed_retrain(const ArchSpec& arch, const Dataset& retain,
                           const TrainConfig& cfg, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = retrain(arch, retain, cfg, seed);
  return {std::move(r), std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count()};
}

// Evaluates one unlearned model against the reference.
inline void fill_metrics(EvalReport& rep, const ModelState& model,
                         const Reference& ref, bool mia) {
  rep.ra = accuracy(model, *ref.retain);
  rep.test_acc = accuracy(model, *ref.test);
  rep.rskl = symmetric_kl(model, *ref.model, *ref.retain);
  if (!ref.forget->empty()) {
    rep.fa = accuracy(model, *ref.forget);
    rep.fe = mean_loss(model, *ref.forget);
    rep.delta_fa = delta_metric(*rep.fa, ref.fa);
    rep.delta_fe = delta_metric(*rep.fe, ref.fe);
    rep.fskl = symmetric_kl(model, *ref.model, *ref.forget);
    if (mia) {
      const MiaResult m = mia_success(model, *ref.forget, *ref.retain, *ref.test);
      rep.fmia = m.rate;
      rep.delta_fmia = delta_metric(m.rate, ref.fmia);
      rep.mia_warning = m.warning;
    }
  }
}

inline Reference make_reference(const ModelState& model, const Dataset& retain,
                                const Dataset& forget, const Dataset& test,
                                double seconds, bool mia) {
  Reference ref{&model, &retain, &forget, &test, 0, 0, 0, 0.5, seconds};
  ref.ra = accuracy(model, retain);
  if (!forget.empty()) {
    ref.fa = accuracy(model, forget);
    ref.fe = mean_loss(model, forget);
    if (mia) ref.fmia = mia_success(model, forget, retain, test).rate;
  }
  return ref;
}

// Runs every method of the scenario on one (retain, forget) pair.
inline std::vector<EvalReport> run_methods(
    const Scenario& s, std::uint64_t seed, std::optional<double> gamma,
    const ModelState& original, const GradientSnapshot& snapshot,
    const Dataset& retain, const Dataset& forget, const Dataset& test,
    const std::function<void(EvalReport&, const ModelState&)>& extra) {
  const ArchSpec arch = s.arch_spec();
  std::vector<EvalReport> out;
  EvalReport base;
  base.scenario = s.name;
  base.mode = s.mode;
  base.seed = seed;
  base.gamma = gamma;
  base.retain_size = retain.size();
  base.forget_size = forget.size();
  std::optional<Timed> reference;
  std::optional<Reference> ref;
  std::string ref_error;
  try {
    if (forget.empty()) throw Error("forget set is empty");
    reference = timed_retrain(arch, retain, original_train_config(s, seed),
                              init_seed(seed));
    ref = make_reference(reference->result.model, retain, forget, test,
                         reference->seconds, s.mia);
  } catch (const std::exception& e) {
    ref_error = std::string("reference retrain failed: ") + e.what();
  }
  for (const MethodConfig& m : s.methods) {
    EvalReport rep = base;
    rep.method = m.label;
    rep.partially_blind = is_partially_blind(m.method);
    try {
      if (!ref) throw Error(ref_error);
      const UnlearnInputs in =
          make_inputs(m.method, original, snapshot, retain, forget);
      MethodOutcome o = run_method(m, in, seed, reference->result,
                                   reference->seconds);
      rep.seconds = o.seconds;
      rep.mask_fraction = o.mask_fraction;
      rep.cost = m.method == Method::kOriginal
                     ? 0.0
                     : cost_ratio(o.seconds, reference->seconds);
      fill_metrics(rep, o.model, *ref, s.mia);
      if (extra) extra(rep, o.model);
    } catch (const std::exception& e) {
      rep.ok = false;
      rep.error = e.what();
    }
    out.push_back(std::move(rep));
  }
  return out;
}

inline std::vector<EvalReport> failed_seed(const Scenario& s,
                                           std::uint64_t seed,
                                           std::optional<double> gamma,
                                           const std::string& error) {
  std::vector<EvalReport> out;
  for (const MethodConfig& m : s.methods) {
    EvalReport rep;
    rep.scenario = s.name;
    rep.mode = s.mode;
    rep.method = m.label;
    rep.seed = seed;
    rep.gamma = gamma;
    rep.ok = false;
    rep.error = error;
    rep.partially_blind = is_partially_blind(m.method);
    out.push_back(std::move(rep));
  }
  return out;
}

inline std::vector<EvalReport> run_classical_seed(const Scenario& s,
                                                  std::uint64_t seed) {
  try {
    const SeedData d = scenario_data(s, seed);
    const ArchSpec arch = s.arch_spec();
    const ModelState original =
        train(ModelState::build(arch, init_seed(seed)), d.train,
              original_train_config(s, seed))
            .model;
    const GradientSnapshot snapshot =
        make_snapshot(original, d.train, s.snapshot_precision);
    SplitSpec split;
    const std::uint64_t split_seed = mix_seed(seed, 3);
    if (s.split.kind == "class") {
      std::size_t count = 0;
      for (std::int32_t y : d.train.labels) count += y == s.split.class_id;
      if (s.split.count) count = *s.split.count;
      split = split_in_class(d.train, s.split.class_id, count, split_seed);
    } else {
      split = split_random(d.train, s.split.fraction, split_seed);
    }
    const Dataset retain = d.train.subset(split.retain_indices(d.train.size()));
    const Dataset forget = d.train.subset(split.forget_indices);
    return run_methods(s, seed, std::nullopt, original, snapshot, retain,
                       forget, d.test, nullptr);
  } catch (const std::exception& e) {
    return failed_seed(s, seed, std::nullopt, e.what());
  }
}

// Corrective mode: the model is trained on corrupted data and a growing
// fraction gamma of the manipulated samples is identified.
inline std::vector<EvalReport> run_corrective_seed(const Scenario& s,
                                                   std::uint64_t seed,
                                                   bool with_replacement) {
  std::vector<EvalReport> out;
  try {
    const SeedData d = scenario_data(s, seed);
    const CorruptionConfig& cc = *s.corruption;
    CorruptionSpec spec;
    spec.kind = cc.kind;
    spec.source_class = cc.source_class;
    spec.target_class = cc.target_class;
    spec.count = cc.count;
    spec.noise_std = cc.noise_std;
    spec.patch_row = cc.patch_row;
    spec.patch_col = cc.patch_col;
    if (cc.kind == CorruptionKind::kBackdoorPoison) {
      spec.patch = constant_patch(cc.patch_side, cc.patch_value);
    }
    const CorruptionResult corrupted =
        apply_corruption(d.train, spec, mix_seed(seed, 4));
    // Manipulated inputs as the model sees them, scored against clean labels.
    Dataset truth = corrupted.data.subset(corrupted.manipulated);
    for (std::size_t i = 0; i < corrupted.manipulated.size(); ++i) {
      truth.labels[i] = d.train.labels[corrupted.manipulated[i]];
    }
    const ArchSpec arch = s.arch_spec();
    const ModelState original =
        train(ModelState::build(arch, init_seed(seed)), corrupted.data,
              original_train_config(s, seed))
            .model;
    const GradientSnapshot snapshot =
        make_snapshot(original, corrupted.data, s.snapshot_precision);
    const Correction fix = correction_for(cc.kind, d.train);
    auto extra = [&](EvalReport& rep, const ModelState& model) {
      const CorrectiveMetrics cm = corrective_metrics(model, truth, d.test);
      rep.acc_corr = cm.acc_corr;
      rep.acc_retain = cm.acc_retain;
    };
    for (double gamma : s.gammas) {
      try {
        const SplitSpec split =
            split_corrective(corrupted.manipulated, gamma, mix_seed(seed, 5));
        const Dataset forget = corrupted.data.subset(split.forget_indices);
        Dataset retain;
        if (with_replacement) {
          retain = apply_replacement(corrupted.data, corrupted.manipulated,
                                     split.forget_indices, fix);
        } else {
          retain = corrupted.data.subset(
              split.retain_indices(corrupted.data.size()));
        }
        auto rows = run_methods(s, seed, gamma, original, snapshot, retain,
                                forget, d.test, extra);
        out.insert(out.end(), rows.begin(), rows.end());
      } catch (const std::exception& e) {
        auto rows = failed_seed(s, seed, gamma, e.what());
        out.insert(out.end(), rows.begin(), rows.end());
      }
    }
  } catch (const std::exception& e) {
    for (double gamma : s.gammas) {
      auto rows = failed_seed(s, seed, gamma, e.what());
      out.insert(out.end(), rows.begin(), rows.end());
    }
  }
  return out;
}

// Runs job(i) for i in [0, n) on up to `jobs` threads; results keep index
// order regardless of scheduling.
template <typename Fn>
std::vector<EvalReport> run_pool(std::size_t n, std::size_t jobs, Fn job) {
  std::vector<std::vector<EvalReport>> parts(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) parts[i] = job(i);
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::vector<EvalReport> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline std::vector<EvalReport> run_classical(const Scenario& s,
                                             std::size_t jobs = 1) {
  if (s.mode != "classical") throw Error("scenario is not in classical mode");
  return run_pool(s.seeds.size(), jobs, [&](std::size_t i) {
    return run_classical_seed(s, s.seeds[i]);
  });
}

inline std::vector<EvalReport> run_corrective(const Scenario& s,
                                              bool with_replacement,
                                              std::size_t jobs = 1) {
  if (s.mode != "corrective") throw Error("scenario is not in corrective mode");
  return run_pool(s.seeds.size(), jobs, [&](std::size_t i) {
    return run_corrective_seed(s, s.seeds[i], with_replacement);
  });
}

inline bool all_ok(const std::vector<EvalReport>& reports) {
  return std::all_of(reports.begin(), reports.end(),
                     [](const EvalReport& r) { return r.ok; });
}

}  // namespace reload

#endif  // RELOAD_HARNESS_HPP_
