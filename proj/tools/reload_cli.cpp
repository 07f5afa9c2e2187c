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

// Command line front end: data generation, training with a cached gradient,
// single unlearning runs and scenario sweeps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "reload.hpp"

namespace {

using namespace reload;

void add_train_flags(CLI::App* app, TrainConfig& c) {
  app->add_option("--epochs", c.epochs, "training epochs");
  app->add_option("--batch-size", c.batch_size, "mini-batch size");
  app->add_option("--lr", c.learning_rate, "SGD learning rate");
  app->add_option("--momentum", c.momentum, "SGD momentum");
  app->add_option("--weight-decay", c.weight_decay, "L2 weight decay");
}

Shape3 input_shape(const Dataset& d) {
  const TensorBuffer& x = d.inputs;
  if (x.rank() == 2) return {x.dim(1), 1, 1};
  if (x.rank() == 4) return {x.dim(1), x.dim(2), x.dim(3)};
  throw Error("dataset inputs must be rank 2 or 4");
}

std::string out_dir(const std::string& flag, const Scenario& s) {
  if (!flag.empty()) return flag;
  if (!s.output.empty()) return s.output;
  return "results/" + s.name;
}

int finish_sweep(const std::vector<EvalReport>& reports, const std::string& dir) {
  emit_report(reports, dir);
  std::size_t failed = 0;
  for (const EvalReport& r : reports) {
    if (r.ok) continue;
    ++failed;
    std::cerr << "failed: " << r.method << " seed " << r.seed
              << (r.gamma ? " gamma " + std::to_string(*r.gamma) : "") << ": "
              << r.error << '\n';
  }
  std::cout << reports.size() << " runs, " << failed << " failed; wrote "
            << dir << "/results.jsonl and " << dir << "/summary.csv\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partially-blind unlearning with cached gradients"};
  app.require_subcommand(1);

  // data -----------------------------------------------------------------
  std::string data_kind = "gaussian-blobs", data_out;
  std::size_t data_n = 600, data_classes = 4, data_dim = 2, data_size = 16,
              data_channels = 1;
  double data_noise = 0.5;
  std::uint64_t data_seed = 1;
  auto* data = app.add_subcommand("data", "generate a synthetic dataset");
  data->add_option("--kind", data_kind,
                   "gaussian-blobs, two-moons, ring or shapes")->capture_default_str();
  data->add_option("--n", data_n, "samples")->capture_default_str();
  data->add_option("--classes", data_classes, "classes")->capture_default_str();
  data->add_option("--dim", data_dim, "feature dimension (blobs)")->capture_default_str();
  data->add_option("--size", data_size, "image side (shapes)")->capture_default_str();
  data->add_option("--channels", data_channels, "image channels (shapes)")
      ->capture_default_str();
  data->add_option("--noise", data_noise, "noise level")->capture_default_str();
  data->add_option("--seed", data_seed, "seed")->capture_default_str();
  data->add_option("--out", data_out, "output dataset file")->required();

  // split ----------------------------------------------------------------
  std::string split_data, split_retain, split_forget;
  double split_fraction = 0.1;
  std::optional<std::int32_t> split_class;
  std::optional<std::size_t> split_count;
  std::uint64_t split_seed = 1;
  auto* split = app.add_subcommand("split", "split a dataset into retain and forget files");
  split->add_option("--data", split_data, "dataset file")->required();
  split->add_option("--fraction", split_fraction, "random forget fraction")
      ->capture_default_str();
  split->add_option("--class", split_class, "forget samples of this class instead");
  split->add_option("--count", split_count, "number of class samples (default: all)");
  split->add_option("--seed", split_seed, "seed")->capture_default_str();
  split->add_option("--retain-out", split_retain, "retain dataset file")->required();
  split->add_option("--forget-out", split_forget, "forget dataset file")->required();

  // train ----------------------------------------------------------------
  std::string train_data, train_arch, train_out, train_snapshot;
  bool train_f16 = false;
  TrainConfig train_cfg;
  std::uint64_t train_seed = 1;
  auto* tr = app.add_subcommand("train", "train a model and cache its full-data gradient");
  tr->add_option("--data", train_data, "training dataset file")->required();
  tr->add_option("--arch", train_arch, "architecture, e.g. dense:64,relu,dense:4")
      ->required();
  add_train_flags(tr, train_cfg);
  tr->add_option("--seed", train_seed, "init and shuffle seed")->capture_default_str();
  tr->add_option("--out", train_out, "model checkpoint")->required();
  tr->add_option("--snapshot", train_snapshot, "gradient snapshot file");
  tr->add_flag("--f16", train_f16, "store the snapshot at half precision");

  // reload ---------------------------------------------------------------
  std::string rl_model, rl_snapshot, rl_retain, rl_out, rl_scheme = "xavier-uniform",
              rl_variant = "standard";
  ReloadConfig rl;
  std::optional<std::size_t> rl_ft_epochs;
  std::optional<double> rl_ft_lr;
  auto* rel = app.add_subcommand("reload", "unlearn with the cached gradient and the retain set");
  rel->add_option("--model", rl_model, "trained checkpoint")->required();
  rel->add_option("--snapshot", rl_snapshot, "gradient snapshot of the training data")
      ->required();
  rel->add_option("--retain-data", rl_retain, "retain dataset file")->required();
  rel->add_option("--alpha", rl.alpha, "fraction of parameters to reset")
      ->capture_default_str();
  rel->add_option("--eta-p", rl.eta_p, "ascent step size")->capture_default_str();
  rel->add_option("--epsilon", rl.epsilon, "smoothing constant")->capture_default_str();
  rel->add_option("--reset-scheme", rl_scheme, "reinitialization scheme")
      ->capture_default_str();
  rel->add_option("--variant", rl_variant,
                  "standard, no-ascent, normalised or cosine-kv")->capture_default_str();
  rel->add_option("--retain-subset", rl.retain_subset_fraction,
                  "fraction of the retain set used for fine-tuning")
      ->capture_default_str();
  rel->add_option("--finetune-epochs", rl_ft_epochs, "fine-tune epochs");
  rel->add_option("--finetune-lr", rl_ft_lr, "fine-tune learning rate");
  rel->add_option("--batch-size", rl.finetune.batch_size, "fine-tune batch size");
  rel->add_option("--momentum", rl.finetune.momentum, "fine-tune momentum");
  rel->add_option("--seed", rl.seed, "seed")->capture_default_str();
  rel->add_option("--out", rl_out, "unlearned checkpoint (sidecar: <out>.json)")
      ->required();

  // baseline -------------------------------------------------------------
  std::string bl_method, bl_model, bl_retain, bl_forget, bl_out,
      bl_scheme = "xavier-uniform";
  TrainConfig bl_cfg;
  std::size_t bl_k = 1, bl_steps = 5;
  double bl_ga_lr = 0.005;
  std::uint64_t bl_seed = 1;
  auto* bl = app.add_subcommand("baseline", "run a comparison method");
  bl->add_option("--method", bl_method, "retrain, ga, ft, cf-k or eu-k")->required();
  bl->add_option("--model", bl_model, "trained checkpoint")->required();
  bl->add_option("--retain-data", bl_retain, "retain dataset file");
  bl->add_option("--forget-data", bl_forget, "forget dataset file (ga only)");
  add_train_flags(bl, bl_cfg);
  bl->add_option("--k", bl_k, "trailing layers for cf-k and eu-k")->capture_default_str();
  bl->add_option("--reset-scheme", bl_scheme, "eu-k reset scheme")->capture_default_str();
  bl->add_option("--steps", bl_steps, "ga steps")->capture_default_str();
  bl->add_option("--ga-lr", bl_ga_lr, "ga step size")->capture_default_str();
  bl->add_option("--seed", bl_seed, "seed")->capture_default_str();
  bl->add_option("--out", bl_out, "output checkpoint")->required();

  // eval -----------------------------------------------------------------
  std::string ev_model, ev_data;
  auto* ev = app.add_subcommand("eval", "accuracy and mean loss of a checkpoint");
  ev->add_option("--model", ev_model, "checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset file")->required();

  // sweeps ---------------------------------------------------------------
  std::string sc_file, sc_out;
  std::size_t sc_jobs = 1;
  bool sc_replace = false;
  auto* cl = app.add_subcommand("classical", "run a classical unlearning scenario");
  auto* co = app.add_subcommand("corrective", "run a corrective unlearning scenario");
  for (auto* sub : {cl, co}) {
    sub->add_option("--scenario", sc_file, "scenario JSON file")->required();
    sub->add_option("--jobs", sc_jobs, "worker threads")->capture_default_str();
    sub->add_option("--out", sc_out, "output directory");
  }
  co->add_flag("--with-replacement", sc_replace,
               "correct identified samples instead of dropping them");

  // report ---------------------------------------------------------------
  std::string rp_in, rp_out;
  auto* rp = app.add_subcommand("report", "aggregate a results.jsonl into CSV");
  rp->add_option("--in", rp_in, "results.jsonl")->required();
  rp->add_option("--out", rp_out, "CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*data) {
      Dataset d = data_kind == "shapes"
                      ? make_shapes(data_n, data_classes, data_size, data_channels,
                                    data_noise, data_seed)
                      : make_synthetic(parse_synthetic_kind(data_kind), data_n,
                                       data_classes, data_noise, data_seed, data_dim);
      save_dataset(d, data_out);
      std::cout << "wrote " << d.size() << " samples to " << data_out << '\n';
      return 0;
    }
    if (*split) {
      const Dataset d = load_dataset(split_data);
      SplitSpec s;
      if (split_class) {
        std::size_t count = 0;
        for (std::int32_t y : d.labels) count += y == *split_class;
        s = split_in_class(d, *split_class, split_count.value_or(count), split_seed);
      } else {
        s = split_random(d, split_fraction, split_seed);
      }
      if (s.forget_indices.empty()) throw Error("split: forget set is empty");
      save_dataset(d.subset(s.retain_indices(d.size())), split_retain);
      save_dataset(d.subset(s.forget_indices), split_forget);
      std::cout << "retain " << d.size() - s.forget_indices.size() << ", forget "
                << s.forget_indices.size() << '\n';
      return 0;
    }
    if (*tr) {
      const Dataset d = load_dataset(train_data);
      const ArchSpec arch = ArchSpec::parse(input_shape(d), train_arch);
      train_cfg.seed = mix_seed(train_seed, 21);
      const TrainResult r =
          train(ModelState::build(arch, mix_seed(train_seed, 22)), d, train_cfg);
      save_model(r.model, train_out);
      std::cout << "trained " << r.history.size() << " epochs, accuracy "
                << accuracy(r.model, d) << "%\n";
      if (!train_snapshot.empty()) {
        GradientSnapshot s = snapshot_full_gradient(r.model, d);
        if (train_f16) s = quantize_snapshot(s);
        save_snapshot(s, train_snapshot);
        std::cout << "wrote snapshot " << train_snapshot << '\n';
      }
      return 0;
    }
    if (*rel) {
      rl.reset_scheme = parse_reset_scheme(rl_scheme);
      rl.variant = parse_variant(rl_variant);
      if (rl_ft_epochs) rl.finetune.epochs = *rl_ft_epochs;
      if (rl_ft_lr) rl.finetune.learning_rate = *rl_ft_lr;
      rl.finetune.seed = mix_seed(rl.seed, 42);
      const ModelState model = load_model(rl_model);
      const ReloadResult r = run_reload(model, load_snapshot(rl_snapshot),
                                        load_dataset(rl_retain), rl);
      save_model(r.model, rl_out);
      json side;
      side["parameters"] = r.kv.mask.size();
      side["reset"] = r.kv.selected();
      side["reset_fraction"] =
          static_cast<double>(r.kv.selected()) / static_cast<double>(r.kv.mask.size());
      side["threshold"] = r.kv.threshold;
      side["timings"] = {{"retain_gradient", r.timings.retain_gradient},
                         {"ascent", r.timings.ascent},
                         {"knowledge_values", r.timings.knowledge_values},
                         {"reinit", r.timings.reinit},
                         {"finetune", r.timings.finetune},
                         {"total", r.timings.total}};
      std::ofstream(rl_out + ".json") << side.dump(2) << '\n';
      std::cout << "reset " << r.kv.selected() << " of " << r.kv.mask.size()
                << " parameters in " << r.timings.total << "s; wrote " << rl_out
                << '\n';
      return 0;
    }
    if (*bl) {
      const Method m = parse_method(bl_method);
      const ModelState model = load_model(bl_model);
      auto retain = [&] {
        if (bl_retain.empty()) throw Error(bl_method + " needs --retain-data");
        return load_dataset(bl_retain);
      };
      bl_cfg.seed = mix_seed(bl_seed, 31);
      ModelState out;
      switch (m) {
        case Method::kRetrain:
          out = retrain(model.arch(), retain(), bl_cfg, mix_seed(bl_seed, 22)).model;
          break;
        case Method::kGa:
          if (bl_forget.empty()) throw Error("ga needs --forget-data");
          out = ga_unlearn(model, load_dataset(bl_forget), bl_steps, bl_ga_lr);
          break;
        case Method::kFt:
          out = ft_unlearn(model, retain(), bl_cfg).model;
          break;
        case Method::kCfk:
          out = cfk_unlearn(model, retain(), bl_k, bl_cfg).model;
          break;
        case Method::kEuk:
          out = euk_unlearn(model, retain(), bl_k, parse_reset_scheme(bl_scheme),
                            bl_cfg, mix_seed(bl_seed, 51))
                    .model;
          break;
        default:
          throw Error("baseline: unsupported method '" + bl_method + "'");
      }
      save_model(out, bl_out);
      std::cout << "wrote " << bl_out << '\n';
      return 0;
    }
    if (*ev) {
      const ModelState m = load_model(ev_model);
      const Dataset d = load_dataset(ev_data);
      std::printf("accuracy %.4f%%  mean loss %.6f  (%zu samples)\n", accuracy(m, d),
                  mean_loss(m, d), d.size());
      return 0;
    }
    if (*cl) {
      const Scenario s = load_scenario(sc_file);
      return finish_sweep(run_classical(s, sc_jobs), out_dir(sc_out, s));
    }
    if (*co) {
      const Scenario s = load_scenario(sc_file);
      const bool replace =
          sc_replace || (s.corruption && s.corruption->with_replacement);
      return finish_sweep(run_corrective(s, replace, sc_jobs), out_dir(sc_out, s));
    }
    if (*rp) {
      const std::string csv = aggregate_csv(read_jsonl(rp_in));
      if (rp_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream(rp_out) << csv;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
