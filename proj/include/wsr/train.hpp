#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wsr/dataset.hpp"
#include "wsr/drsn.hpp"
#include "wsr/mixmatch.hpp"

namespace wsr::train {

enum class TrainMode { Supervised, MixMatch };

std::string mode_name(TrainMode mode);
TrainMode parse_mode(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  TrainMode mode = TrainMode::Supervised;
  mixmatch::MixMatchConfig mixmatch;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> checkpoint_path;
  // Fixed number of steps per epoch, cycling both sets as needed. Without
  // it: |labeled| / B (supervised) or max(|labeled|, |unlabeled|) / B.
  std::optional<std::size_t> steps_per_epoch;

  void validate() const;
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double loss_x = 0.0;
  double loss_u = 0.0;
  double lambda_u = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  // Means over the epoch's steps.
  double loss = 0.0;
  double loss_x = 0.0;
  double loss_u = 0.0;
  std::optional<double> val_acc;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::vector<StepLog> steps;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains `model` in place. In supervised mode `unlabeled` is ignored.
// Batch order uses derive_seed(cfg.seed, {1}) for the labeled set and
// {2} for the unlabeled set; MixMatch draws come from
// derive_seed(cfg.seed, {3, cfg.mixmatch.seed}).
// Throws NonFiniteLossError naming the step on a NaN or infinite loss.
TrainResult train(drsn::DrsnModel<float>& model, const data::Dataset& labeled,
                  const data::Dataset& unlabeled, const TrainConfig& cfg,
                  const data::Dataset* validation = nullptr,
                  const EpochCallback& on_epoch = {});

struct SnrAccuracy {
  double snr_db = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  bool operator==(const SnrAccuracy&) const = default;
};

struct ClassAccuracy {
  std::string name;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  bool operator==(const ClassAccuracy&) const = default;
};

struct EvalReport {
  double overall_acc = 0.0;
  std::size_t t = 0;  // correct
  std::size_t f = 0;  // wrong
  std::vector<SnrAccuracy> per_snr;      // ascending snr
  std::vector<ClassAccuracy> per_class;  // class index order
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  bool operator==(const EvalReport&) const = default;
};

// Index of the largest logit, lowest index on ties.
std::size_t argmax(std::span<const float> logits);

// Builds a report from predictions. Throws InvalidArgument for a class or
// prediction index outside class_names.
EvalReport summarize(const std::vector<std::string>& class_names,
                     std::span<const std::uint16_t> truth, std::span<const std::size_t> predicted,
                     std::span<const float> snr_db);

// threads = 0 reads WSR_THREADS (default 1). Shards are merged by count, so
// the report does not depend on the thread count or record order.
EvalReport evaluate(const drsn::DrsnModel<float>& model, const data::Dataset& test,
                    std::size_t threads = 0);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

enum class ReportFormat { Csv, Json, All };

ReportFormat parse_report_format(const std::string& name);

// Csv writes acc_vs_snr.csv and confusion.csv, Json writes report.json, All
// writes the three. Returns the file names written, in that order.
std::vector<std::string> emit_report(const EvalReport& report, const std::filesystem::path& dir,
                                     ReportFormat format = ReportFormat::All);

// Writes epoch,steps,loss,loss_x,loss_u,val_acc rows.
void write_train_log(const TrainResult& result, const std::filesystem::path& path);

}  // namespace wsr::train
