#include "wsr/train.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <thread>

#include "json.hpp"

#include "wsr/checkpoint.hpp"
#include "wsr/dataio.hpp"
#include "wsr/error.hpp"
#include "wsr/ops.hpp"
#include "wsr/optim.hpp"
#include "wsr/rng.hpp"

namespace wsr::train {

using data::Batch;
using data::BatchIterator;
using data::BatchMode;
using data::Dataset;

std::string mode_name(TrainMode mode) {
  return mode == TrainMode::Supervised ? "supervised" : "mixmatch";
}

TrainMode parse_mode(const std::string& name) {
  if (name == "supervised") return TrainMode::Supervised;
  if (name == "mixmatch") return TrainMode::MixMatch;
  throw InvalidArgument("unknown training mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  if (mode == TrainMode::MixMatch && batch_size < 2)
    throw InvalidArgument("mixmatch mode needs a batch size of at least 2");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be positive");
  if (steps_per_epoch && *steps_per_epoch == 0)
    throw InvalidArgument("steps per epoch must be positive");
  mixmatch.validate();
}

namespace {

// Endless shuffled batches: each exhausted pass starts the next with its own
// shuffle.
class CyclingBatches {
 public:
  CyclingBatches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed)
      : it_(ds.records, batch_size, BatchMode::Train, seed) {
    it_.start_epoch(0);
  }

  std::size_t batches_per_pass() const { return it_.batches_per_epoch(); }

  void next(Batch& out) {
    if (it_.next(out)) return;
    it_.start_epoch(++pass_);
    it_.next(out);
  }

 private:
  BatchIterator it_;
  std::size_t pass_ = 0;
};

ag::Tensor<float> one_hot(std::span<const std::uint16_t> labels, std::size_t classes) {
  ag::Tensor<float> out({labels.size(), classes});
  auto d = out.data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw InvalidArgument("label index out of range");
    d[i * classes + labels[i]] = 1.0f;
  }
  return out;
}

void check_compatible(const drsn::DrsnModel<float>& model, const Dataset& ds, const char* what) {
  const auto& cfg = model.config();
  if (ds.header.length != cfg.input_len)
    throw InvalidArgument(std::string(what) + " record length " +
                          std::to_string(ds.header.length) + " differs from model input " +
                          std::to_string(cfg.input_len));
  if (ds.header.class_names.size() != cfg.num_classes)
    throw InvalidArgument(std::string(what) + " has " +
                          std::to_string(ds.header.class_names.size()) +
                          " classes, model expects " + std::to_string(cfg.num_classes));
}

}  // namespace

TrainResult train(drsn::DrsnModel<float>& model, const Dataset& labeled, const Dataset& unlabeled,
                  const TrainConfig& cfg, const Dataset* validation,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const std::size_t B = cfg.batch_size;
  const bool semi = cfg.mode == TrainMode::MixMatch;
  if (labeled.records.empty()) throw InvalidArgument("labeled set is empty");
  if (labeled.records.size() < B)
    throw InvalidArgument("labeled set holds " + std::to_string(labeled.records.size()) +
                          " records, fewer than one batch of " + std::to_string(B));
  check_compatible(model, labeled, "labeled set");
  if (semi) {
    if (unlabeled.records.empty()) throw InvalidArgument("mixmatch mode needs unlabeled records");
    if (unlabeled.records.size() < B)
      throw InvalidArgument("unlabeled set holds fewer records than one batch");
    check_compatible(model, unlabeled, "unlabeled set");
  }
  if (validation) check_compatible(model, *validation, "validation set");

  CyclingBatches lab(labeled, B, derive_seed(cfg.seed, {1}));
  std::optional<CyclingBatches> unl;
  if (semi) unl.emplace(unlabeled, B, derive_seed(cfg.seed, {2}));
  Rng mix_rng(derive_seed(cfg.seed, {3, cfg.mixmatch.seed}));

  std::size_t steps_per_epoch = lab.batches_per_pass();
  if (semi) steps_per_epoch = std::max(labeled.records.size(), unlabeled.records.size()) / B;
  if (cfg.steps_per_epoch) steps_per_epoch = *cfg.steps_per_epoch;

  const std::size_t C = model.config().num_classes;
  auto params = model.parameters();
  ag::AdamState<float> adam(ag::AdamOptions{.lr = cfg.lr});
  mixmatch::Forward forward = [&model](ag::Tape<float>* tape, const ag::Tensor<float>& x) {
    return drsn::drsn_forward(tape, model, x);
  };

  TrainResult result;
  Batch xb;
  Batch ub;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog elog;
    elog.epoch = epoch;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      lab.next(xb);
      ag::Tape<float> tape;
      StepLog slog;
      slog.step = step;
      slog.epoch = epoch;
      ag::Tensor<float> loss;
      try {
        if (semi) {
          unl->next(ub);
          auto mixed = mixmatch::mixmatch_batch(forward, xb.x, xb.labels, C, ub.x, cfg.mixmatch,
                                                mix_rng);
          const double lambda_u = cfg.mixmatch.lambda_u_at(step);
          auto sl = mixmatch::semi_loss(&tape, forward, mixed, lambda_u);
          loss = sl.total;
          slog.loss_x = sl.loss_x;
          slog.loss_u = sl.loss_u;
          slog.lambda_u = lambda_u;
        } else {
          auto logits = drsn::drsn_forward(&tape, model, xb.x);
          loss = ag::softmax_cross_entropy(&tape, logits, one_hot(xb.labels, C));
          slog.loss_x = loss.item();
        }
        slog.loss = loss.item();
        if (!std::isfinite(slog.loss))
          throw NonFiniteLossError(step, "non-finite loss at step " + std::to_string(step));
        tape.backward(loss);
      } catch (const NonFiniteLossError&) {
        throw;
      } catch (const NonFiniteError& e) {
        throw NonFiniteLossError(step, "non-finite values at step " + std::to_string(step) + ": " +
                                           e.what());
      }
      ag::adam_step<float>(params, adam);

      elog.loss += slog.loss;
      elog.loss_x += slog.loss_x;
      elog.loss_u += slog.loss_u;
      result.steps.push_back(slog);
    }
    elog.steps = steps_per_epoch;
    const auto n = static_cast<double>(steps_per_epoch);
    elog.loss /= n;
    elog.loss_x /= n;
    elog.loss_u /= n;
    if (validation) {
      elog.val_acc = evaluate(model, *validation).overall_acc;
      if (cfg.checkpoint_path) drsn::save_checkpoint(model, *cfg.checkpoint_path);
    }
    result.epochs.push_back(elog);
    if (on_epoch) on_epoch(elog);
  }
  if (cfg.checkpoint_path && !validation) drsn::save_checkpoint(model, *cfg.checkpoint_path);
  return result;
}

std::size_t argmax(std::span<const float> logits) {
  if (logits.empty()) throw InvalidArgument("argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

EvalReport summarize(const std::vector<std::string>& class_names,
                     std::span<const std::uint16_t> truth, std::span<const std::size_t> predicted,
                     std::span<const float> snr_db) {
  const std::size_t C = class_names.size();
  if (truth.size() != predicted.size() || truth.size() != snr_db.size())
    throw ShapeError("prediction, truth and snr lists differ in length");
  if (truth.empty()) throw InvalidArgument("nothing to evaluate");

  EvalReport r;
  r.confusion.assign(C, std::vector<std::size_t>(C, 0));
  std::map<float, SnrAccuracy> bins;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= C) throw InvalidArgument("class index " + std::to_string(truth[i]) +
                                             " out of range");
    if (predicted[i] >= C) throw InvalidArgument("predicted index out of range");
    ++r.confusion[truth[i]][predicted[i]];
    const bool ok = truth[i] == predicted[i];
    (ok ? r.t : r.f) += 1;
    auto& bin = bins[snr_db[i]];
    bin.snr_db = snr_db[i];
    bin.correct += ok ? 1 : 0;
    bin.total += 1;
  }
  r.overall_acc = static_cast<double>(r.t) / static_cast<double>(r.t + r.f);
  for (auto& [snr, bin] : bins) {
    bin.accuracy = static_cast<double>(bin.correct) / static_cast<double>(bin.total);
    r.per_snr.push_back(bin);
  }
  for (std::size_t c = 0; c < C; ++c) {
    ClassAccuracy ca;
    ca.name = class_names[c];
    ca.correct = r.confusion[c][c];
    for (std::size_t v : r.confusion[c]) ca.total += v;
    ca.accuracy = ca.total ? static_cast<double>(ca.correct) / static_cast<double>(ca.total) : 0.0;
    r.per_class.push_back(ca);
  }
  return r;
}

namespace {

std::size_t env_threads() {
  if (const char* v = std::getenv("WSR_THREADS")) {
    char* end = nullptr;
    long n = std::strtol(v, &end, 10);
    if (end != v && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return 1;
}

void predict_range(const drsn::DrsnModel<float>& model, const Dataset& ds, std::size_t begin,
                   std::size_t end, std::span<std::size_t> out) {
  constexpr std::size_t kChunk = 256;
  const std::size_t C = model.config().num_classes;
  std::vector<std::size_t> idx;
  for (std::size_t lo = begin; lo < end; lo += kChunk) {
    const std::size_t hi = std::min(end, lo + kChunk);
    idx.resize(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) idx[i - lo] = i;
    auto logits = drsn::drsn_forward<float>(nullptr, model, data::stack_records(ds.records, idx));
    auto d = logits.data();
    for (std::size_t i = lo; i < hi; ++i) out[i] = argmax(d.subspan((i - lo) * C, C));
  }
}

}  // namespace

EvalReport evaluate(const drsn::DrsnModel<float>& model, const Dataset& test, std::size_t threads) {
  if (test.records.empty()) throw InvalidArgument("test set is empty");
  check_compatible(model, test, "test set");
  const std::size_t n = test.records.size();
  if (threads == 0) threads = env_threads();
  threads = std::min(threads, n);

  std::vector<std::size_t> predicted(n);
  if (threads <= 1) {
    predict_range(model, test, 0, n, predicted);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t lo = n * t / threads;
      const std::size_t hi = n * (t + 1) / threads;
      pool.emplace_back([&, t, lo, hi] {
        try {
          predict_range(model, test, lo, hi, predicted);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<std::uint16_t> truth(n);
  std::vector<float> snr(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = test.records[i].class_idx;
    snr[i] = test.records[i].snr_db;
  }
  return summarize(test.header.class_names, truth, predicted, snr);
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["overall_acc"] = report.overall_acc;
  j["t"] = report.t;
  j["f"] = report.f;
  j["per_snr"] = nlohmann::ordered_json::array();
  for (const auto& b : report.per_snr)
    j["per_snr"].push_back(
        {{"snr_db", b.snr_db}, {"correct", b.correct}, {"total", b.total}, {"accuracy", b.accuracy}});
  j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& c : report.per_class)
    j["per_class"].push_back(
        {{"name", c.name}, {"correct", c.correct}, {"total", c.total}, {"accuracy", c.accuracy}});
  j["confusion"] = report.confusion;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.overall_acc = j.at("overall_acc").get<double>();
    r.t = j.at("t").get<std::size_t>();
    r.f = j.at("f").get<std::size_t>();
    for (const auto& b : j.at("per_snr"))
      r.per_snr.push_back({b.at("snr_db").get<double>(), b.at("correct").get<std::size_t>(),
                           b.at("total").get<std::size_t>(), b.at("accuracy").get<double>()});
    for (const auto& c : j.at("per_class"))
      r.per_class.push_back({c.at("name").get<std::string>(), c.at("correct").get<std::size_t>(),
                             c.at("total").get<std::size_t>(), c.at("accuracy").get<double>()});
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad report JSON: ") + e.what());
  }
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  if (name == "all") return ReportFormat::All;
  throw InvalidArgument("unknown report format '" + name + "'");
}

std::vector<std::string> emit_report(const EvalReport& report, const std::filesystem::path& dir,
                                     ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::string> written;
  if (format != ReportFormat::Json) {
    {
      auto out = open_out(dir / "acc_vs_snr.csv");
      out << "snr_db,accuracy\n";
      for (const auto& b : report.per_snr)
        out << fmt("%g", b.snr_db) << ',' << fmt("%.6f", b.accuracy) << '\n';
      if (!out) throw IoError("write failed for acc_vs_snr.csv");
    }
    {
      auto out = open_out(dir / "confusion.csv");
      out << "true\\predicted";
      for (const auto& c : report.per_class) out << ',' << c.name;
      out << '\n';
      for (std::size_t i = 0; i < report.confusion.size(); ++i) {
        out << report.per_class.at(i).name;
        for (std::size_t v : report.confusion[i]) out << ',' << v;
        out << '\n';
      }
      if (!out) throw IoError("write failed for confusion.csv");
    }
    written.push_back("acc_vs_snr.csv");
    written.push_back("confusion.csv");
  }
  if (format != ReportFormat::Csv) {
    auto out = open_out(dir / "report.json");
    out << report_to_json(report);
    if (!out) throw IoError("write failed for report.json");
    written.push_back("report.json");
  }
  return written;
}

void write_train_log(const TrainResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "epoch,steps,loss,loss_x,loss_u,val_acc\n";
  for (const auto& e : result.epochs) {
    out << e.epoch << ',' << e.steps << ',' << fmt("%.8g", e.loss) << ','
        << fmt("%.8g", e.loss_x) << ',' << fmt("%.8g", e.loss_u) << ','
        << (e.val_acc ? fmt("%.6f", *e.val_acc) : std::string()) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace wsr::train
