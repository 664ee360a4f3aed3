#include "wsr/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "wsr/binio.hpp"
#include "wsr/checkpoint.hpp"
#include "wsr/dataio.hpp"
#include "wsr/digest.hpp"
#include "wsr/drsn.hpp"
#include "wsr/error.hpp"
#include "wsr/gradsuite.hpp"
#include "wsr/sigsyn.hpp"
#include "wsr/train.hpp"
#include "wsr/version.hpp"

namespace wsr::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

// Runs a check on flag values, reporting a rejected value as a usage error.
template <typename F>
auto flag_check(F&& check) {
  try {
    return check();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

struct FileRef {
  std::string role;
  fs::path path;
};

// Collected while a command runs, written next to its outputs at the end.
struct Manifest {
  std::string command;
  ordered_json config = ordered_json::object();
  ordered_json seeds = ordered_json::object();
  std::vector<FileRef> inputs;
  std::vector<FileRef> outputs;
};

ordered_json file_list(const std::vector<FileRef>& files) {
  ordered_json arr = ordered_json::array();
  for (const auto& f : files)
    arr.push_back({{"role", f.role}, {"path", f.path.generic_string()},
                   {"sha256", file_sha256(f.path)}});
  return arr;
}

void write_manifest(const Manifest& m, const fs::path& path, double seconds) {
  ordered_json j;
  j["command"] = m.command;
  j["toolkit_version"] = kVersion;
  j["config"] = m.config;
  j["seeds"] = m.seeds;
  j["inputs"] = file_list(m.inputs);
  j["outputs"] = file_list(m.outputs);
  j["duration_s"] = seconds;
  binio::write_file(path, j.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path))
    throw IoError(std::string(what) + " not found: " + path.string());
}

std::string json_scalar_to_arg(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

// Applies a --config JSON object by appending "--key value" for every key
// not already given on the command line, so flags keep precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> config_path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file path");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config_path) return rest;

  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(binio::read_file(*config_path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("--config " + *config_path + ": " + e.what());
  }
  if (!cfg.is_object()) throw UsageError("--config file must hold a JSON object");

  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& a : rest)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  for (const auto& [key, value] : cfg.items()) {
    if (given(key)) continue;
    if (value.is_array()) {
      for (const auto& item : value) {
        rest.push_back("--" + key);
        rest.push_back(json_scalar_to_arg(item));
      }
    } else {
      rest.push_back("--" + key);
      rest.push_back(json_scalar_to_arg(value));
    }
  }
  return rest;
}

std::vector<double> snr_range(double lo, double hi, double step) {
  if (!(step > 0.0)) throw UsageError("--snr-step must be positive");
  if (hi < lo) throw UsageError("--snr-max must not be below --snr-min");
  std::vector<double> grid;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < n; ++i) grid.push_back(lo + static_cast<double>(i) * step);
  return grid;
}

// ---------------------------------------------------------------- gen

struct GenOptions {
  std::vector<std::string> classes;
  double snr_min = -6.0;
  double snr_max = 12.0;
  double snr_step = 2.0;
  std::size_t per_cell = 100;
  std::size_t length = 128;
  std::uint64_t seed = 0;
  std::string out;
};

fs::path cmd_gen(const GenOptions& o, Manifest& m, std::ostream& out) {
  sigsyn::SynthSpec spec;
  if (o.classes.empty()) {
    auto all = sigsyn::all_modulations();
    spec.classes.assign(all.begin(), all.end());
  } else {
    for (const auto& name : o.classes)
      spec.classes.push_back(flag_check([&] { return sigsyn::parse_modulation(name); }));
  }
  spec.snr_grid = snr_range(o.snr_min, o.snr_max, o.snr_step);
  spec.per_cell = o.per_cell;
  spec.length = o.length;
  spec.seed = o.seed;
  flag_check([&] { spec.validate(); });

  std::vector<std::string> names;
  for (auto c : spec.classes) names.emplace_back(sigsyn::modulation_name(c));
  m.config = {{"classes", names},
              {"snr_grid", spec.snr_grid},
              {"per_cell", spec.per_cell},
              {"len", spec.length},
              {"samples_per_symbol", spec.samples_per_symbol},
              {"rrc_rolloff", spec.rrc_rolloff},
              {"rrc_span", spec.rrc_span},
              {"max_cfo", spec.max_cfo}};
  m.seeds = {{"seed", spec.seed}};

  const fs::path dir(o.out);
  ensure_dir(dir);
  const auto ds = sigsyn::synth_dataset(spec);
  const fs::path file = dir / "dataset.wsig";
  data::write_wsig(ds, file);
  m.outputs.push_back({"dataset", file});
  out << "wrote " << ds.records.size() << " records to " << file.string() << "\n";
  return dir / "manifest.json";
}

// ---------------------------------------------------------------- split

struct SplitOptions {
  std::string in;
  double test_frac = 0.2;
  double labeled_frac = 1.0;
  std::uint64_t seed = 0;
  std::string out_prefix;
};

fs::path cmd_split(const SplitOptions& o, Manifest& m, std::ostream& out) {
  require_file(o.in, "input dataset");
  data::SplitSpec spec{o.test_frac, o.labeled_frac, o.seed};
  flag_check([&] { spec.validate(); });
  m.config = {{"in", o.in}, {"test_frac", spec.test_frac}, {"labeled_frac", spec.labeled_frac},
              {"out_prefix", o.out_prefix}};
  m.seeds = {{"seed", spec.seed}};
  m.inputs.push_back({"dataset", o.in});

  const auto ds = data::read_wsig(o.in);
  const auto parts = data::stratified_split(ds, spec);
  const fs::path prefix(o.out_prefix);
  if (prefix.has_parent_path()) ensure_dir(prefix.parent_path());
  const std::pair<const char*, const data::Dataset*> files[] = {
      {"labeled", &parts.labeled}, {"unlabeled", &parts.unlabeled}, {"test", &parts.test}};
  for (const auto& [role, part] : files) {
    const fs::path path = o.out_prefix + "." + role + ".wsig";
    data::write_wsig(*part, path);
    m.outputs.push_back({role, path});
    out << role << ": " << part->records.size() << " records -> " << path.string() << "\n";
  }
  return o.out_prefix + ".manifest.json";
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string labeled;
  std::string unlabeled;
  std::string validation;
  std::string mode = "supervised";
  std::size_t epochs = 50;
  double lr = 1e-3;
  std::size_t batch = 64;
  double T = 0.5;
  std::size_t K = 2;
  double alpha = 0.75;
  double lambda_u = 75.0;
  double smooth_frac = 0.05;
  bool no_flip = false;
  std::size_t rampup = 0;
  std::size_t steps_per_epoch = 0;
  std::size_t stacks = 3;
  std::size_t channels = 32;
  std::size_t kernel = 3;
  std::size_t hidden = 128;
  std::uint64_t seed = 0;
  std::string out;
};

fs::path cmd_train(const TrainOptions& o, Manifest& m, std::ostream& out) {
  train::TrainConfig cfg;
  cfg.mode = flag_check([&] { return train::parse_mode(o.mode); });
  cfg.epochs = o.epochs;
  cfg.lr = o.lr;
  cfg.batch_size = o.batch;
  cfg.seed = o.seed;
  cfg.mixmatch.T = o.T;
  cfg.mixmatch.K = o.K;
  cfg.mixmatch.alpha = o.alpha;
  cfg.mixmatch.lambda_u = o.lambda_u;
  cfg.mixmatch.smooth_frac = o.smooth_frac;
  cfg.mixmatch.flip = !o.no_flip;
  cfg.mixmatch.rampup_steps = o.rampup;
  if (o.steps_per_epoch > 0) cfg.steps_per_epoch = o.steps_per_epoch;
  const bool semi = cfg.mode == train::TrainMode::MixMatch;
  if (semi && o.unlabeled.empty()) throw UsageError("--mode mixmatch requires --unlabeled");
  flag_check([&] { cfg.validate(); });

  require_file(o.labeled, "labeled dataset");
  const auto labeled = data::read_wsig(o.labeled);
  m.inputs.push_back({"labeled", o.labeled});
  data::Dataset unlabeled;
  if (semi) {
    require_file(o.unlabeled, "unlabeled dataset");
    unlabeled = data::read_wsig(o.unlabeled);
    m.inputs.push_back({"unlabeled", o.unlabeled});
    if (unlabeled.header.class_names != labeled.header.class_names)
      throw InvalidArgument("labeled and unlabeled sets have different class tables");
  }
  std::optional<data::Dataset> validation;
  if (!o.validation.empty()) {
    require_file(o.validation, "validation dataset");
    validation = data::read_wsig(o.validation);
    m.inputs.push_back({"validation", o.validation});
    if (validation->header.class_names != labeled.header.class_names)
      throw InvalidArgument("validation set has a different class table");
  }

  drsn::DrsnConfig mc;
  mc.num_classes = labeled.header.class_names.size();
  mc.input_len = labeled.header.length;
  mc.num_stacks = o.stacks;
  mc.channels = o.channels;
  mc.rsu_kernel = o.kernel;
  mc.fc_hidden = o.hidden;
  mc.seed = o.seed;
  flag_check([&] { mc.validate(); });
  drsn::DrsnModel<float> model(mc);

  const fs::path dir(o.out);
  ensure_dir(dir);
  cfg.checkpoint_path = dir / "model.wnet";

  m.config = {{"mode", train::mode_name(cfg.mode)},
              {"epochs", cfg.epochs},
              {"lr", cfg.lr},
              {"batch", cfg.batch_size},
              {"steps_per_epoch", o.steps_per_epoch},
              {"T", cfg.mixmatch.T},
              {"K", cfg.mixmatch.K},
              {"alpha", cfg.mixmatch.alpha},
              {"lambda_u", cfg.mixmatch.lambda_u},
              {"smooth_frac", cfg.mixmatch.smooth_frac},
              {"flip", cfg.mixmatch.flip},
              {"rampup", cfg.mixmatch.rampup_steps},
              {"model", drsn::config_to_json(mc)},
              {"param_count", model.param_count()}};
  m.seeds = {{"seed", o.seed}};

  out << "model: " << model.param_count() << " parameters, " << mc.num_stacks << " stacks\n";
  auto progress = [&](const train::EpochLog& e) {
    out << "epoch " << (e.epoch + 1) << "/" << cfg.epochs << "  L=" << e.loss
        << "  L_X=" << e.loss_x << "  L_U=" << e.loss_u;
    if (e.val_acc) out << "  val_acc=" << *e.val_acc;
    out << std::endl;
  };
  const auto result =
      train::train(model, labeled, unlabeled, cfg, validation ? &*validation : nullptr, progress);

  const fs::path log = dir / "train_log.csv";
  train::write_train_log(result, log);
  m.outputs.push_back({"checkpoint", *cfg.checkpoint_path});
  m.outputs.push_back({"log", log});
  return dir / "manifest.json";
}

struct EvalOptions {
  std::string model;
  std::string data;
  std::string out;
  std::string format = "all";
  std::size_t threads = 0;
};

fs::path cmd_eval(const EvalOptions& o, Manifest& m, std::ostream& out) {
  require_file(o.model, "checkpoint");
  require_file(o.data, "dataset");
  m.inputs.push_back({"checkpoint", o.model});
  m.inputs.push_back({"dataset", o.data});
  m.config = {{"format", o.format}};

  const auto model = drsn::load_checkpoint(o.model);
  const auto ds = data::read_wsig(o.data);
  if (ds.header.class_names.size() != model.config().num_classes)
    throw InvalidArgument("dataset has " + std::to_string(ds.header.class_names.size()) +
                          " classes, checkpoint expects " +
                          std::to_string(model.config().num_classes));
  const auto report = train::evaluate(model, ds, o.threads);

  const fs::path dir(o.out);
  ensure_dir(dir);
  const auto format = train::parse_report_format(o.format);
  for (const auto& name : train::emit_report(report, dir, format))
    m.outputs.push_back({fs::path(name).stem().string(), dir / name});
  out << "accuracy " << report.overall_acc << " (" << report.t << "/" << (report.t + report.f)
      << ")\n";
  return dir / "manifest.json";
}

struct GradcheckOptions {
  std::uint64_t seed = 7;
};

bool cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  const auto outcomes = gradsuite::run_cases(gradsuite::all_cases(o.seed));
  std::size_t failed = 0;
  for (const auto& r : outcomes) {
    char line[160];
    std::snprintf(line, sizeof line, "%-4s %-40s max_rel_err=%.3e tol=%.0e", r.passed ? "ok" : "FAIL",
                  r.name.c_str(), r.result.max_rel_error, r.tolerance);
    out << line;
    if (!r.error.empty()) out << "  error: " << r.error;
    out << "\n";
    failed += r.passed ? 0 : 1;
  }
  out << (outcomes.size() - failed) << "/" << outcomes.size() << " checks passed\n";
  return failed == 0;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wireless signal recognition toolkit: synthetic IQ data, DRSN models, "
               "MixMatch training",
               "wsr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.set_help_all_flag("--help-all");

  GenOptions gen;
  auto* sc_gen = app.add_subcommand("gen", "Synthesize a labeled IQ dataset");
  sc_gen->add_option("--classes", gen.classes, "Modulation names (default: all)")->delimiter(',');
  sc_gen->add_option("--snr-min", gen.snr_min, "Lowest SNR in dB")->capture_default_str();
  sc_gen->add_option("--snr-max", gen.snr_max, "Highest SNR in dB")->capture_default_str();
  sc_gen->add_option("--snr-step", gen.snr_step, "SNR grid step in dB")->capture_default_str();
  sc_gen->add_option("--per-cell", gen.per_cell, "Records per (class, SNR) cell")
      ->capture_default_str();
  sc_gen->add_option("--len", gen.length, "Samples per record")->capture_default_str();
  sc_gen->add_option("--seed", gen.seed, "Base seed")->capture_default_str();
  sc_gen->add_option("--out", gen.out, "Output directory")->required();

  SplitOptions split;
  auto* sc_split = app.add_subcommand("split", "Stratified labeled/unlabeled/test split");
  sc_split->add_option("--in", split.in, "Input WSIG file")->required();
  sc_split->add_option("--test-frac", split.test_frac, "Test share per cell")
      ->capture_default_str();
  sc_split->add_option("--labeled-frac", split.labeled_frac,
                       "Labeled share of the non-test remainder")
      ->capture_default_str();
  sc_split->add_option("--seed", split.seed, "Split seed")->capture_default_str();
  sc_split->add_option("--out-prefix", split.out_prefix, "Output path prefix")->required();

  TrainOptions tr;
  auto* sc_train = app.add_subcommand("train", "Train a DRSN classifier");
  sc_train->add_option("--labeled", tr.labeled, "Labeled WSIG file")->required();
  sc_train->add_option("--unlabeled", tr.unlabeled, "Unlabeled WSIG file (mixmatch mode)");
  sc_train->add_option("--val", tr.validation, "Validation WSIG file");
  sc_train->add_option("--mode", tr.mode, "supervised or mixmatch")
      ->check(CLI::IsMember({"supervised", "mixmatch"}))
      ->capture_default_str();
  sc_train->add_option("--epochs", tr.epochs)->capture_default_str();
  sc_train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  sc_train->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  sc_train->add_option("--T", tr.T, "Sharpening temperature")->capture_default_str();
  sc_train->add_option("--K", tr.K, "Augmentations per unlabeled record")->capture_default_str();
  sc_train->add_option("--alpha", tr.alpha, "MixUp Beta parameter")->capture_default_str();
  sc_train->add_option("--lambda-u", tr.lambda_u, "Unlabeled loss weight")
      ->capture_default_str();
  sc_train->add_option("--smooth-frac", tr.smooth_frac, "Share of points smoothed per plane")
      ->capture_default_str();
  sc_train->add_flag("--no-flip", tr.no_flip, "Disable the I/Q sign-flip augmentation");
  sc_train->add_option("--rampup", tr.rampup, "Linear lambda-u ramp length in steps (0: off)")
      ->capture_default_str();
  sc_train->add_option("--steps-per-epoch", tr.steps_per_epoch,
                       "Fixed steps per epoch (0: derived from set sizes)")
      ->capture_default_str();
  sc_train->add_option("--stacks", tr.stacks, "Residual stacks")->capture_default_str();
  sc_train->add_option("--channels", tr.channels, "Feature channels")->capture_default_str();
  sc_train->add_option("--kernel", tr.kernel, "RSU kernel size")->capture_default_str();
  sc_train->add_option("--hidden", tr.hidden, "Hidden dense width (0: none)")
      ->capture_default_str();
  sc_train->add_option("--seed", tr.seed)->capture_default_str();
  sc_train->add_option("--out", tr.out, "Output directory")->required();

  EvalOptions ev;
  auto* sc_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  sc_eval->add_option("--model", ev.model, "WNET checkpoint")->required();
  sc_eval->add_option("--data", ev.data, "WSIG dataset")->required();
  sc_eval->add_option("--out", ev.out, "Output directory")->required();
  sc_eval->add_option("--format", ev.format, "csv, json or all")
      ->check(CLI::IsMember({"csv", "json", "all"}))
      ->capture_default_str();
  sc_eval->add_option("--threads", ev.threads, "Worker threads (0: WSR_THREADS or 1)")
      ->capture_default_str();

  GradcheckOptions gc;
  auto* sc_grad = app.add_subcommand("gradcheck", "Finite-difference check of every operator");
  sc_grad->add_option("--seed", gc.seed)->capture_default_str();

  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
    // CLI11 consumes the vector from the back.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }

  const auto started = std::chrono::steady_clock::now();
  CLI::App* active = app.get_subcommands().front();
  try {
    Manifest m;
    m.command = active->get_name();
    fs::path manifest_path;
    if (active == sc_gen) {
      manifest_path = cmd_gen(gen, m, out);
    } else if (active == sc_split) {
      manifest_path = cmd_split(split, m, out);
    } else if (active == sc_train) {
      manifest_path = cmd_train(tr, m, out);
    } else if (active == sc_eval) {
      manifest_path = cmd_eval(ev, m, out);
    } else {
      return cmd_gradcheck(gc, out) ? kOk : kFailure;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_manifest(m, manifest_path, seconds);
    return kOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << active->help();
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace wsr::cli
