#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "wsr/checkpoint.hpp"
#include "wsr/dataio.hpp"
#include "wsr/error.hpp"
#include "wsr/rng.hpp"
#include "wsr/sigsyn.hpp"
#include "wsr/train.hpp"

using namespace wsr;
using namespace wsr::train;
using data::Dataset;

namespace {

drsn::DrsnConfig tiny_config(std::size_t classes = 2) {
  drsn::DrsnConfig c;
  c.num_classes = classes;
  c.input_len = 32;
  c.num_stacks = 1;
  c.channels = 4;
  c.fc_hidden = 8;
  c.seed = 1;
  return c;
}

Dataset synth(std::vector<sigsyn::Modulation> classes, std::vector<double> snrs,
              std::size_t per_cell, std::uint64_t seed) {
  sigsyn::SynthSpec s;
  s.classes = std::move(classes);
  s.snr_grid = std::move(snrs);
  s.per_cell = per_cell;
  s.length = 32;
  s.seed = seed;
  return sigsyn::synth_dataset(s);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "wsr_test_train" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

// Model whose logits are the classifier bias regardless of input.
drsn::DrsnModel<float> constant_model(std::size_t classes, std::size_t winner) {
  drsn::DrsnModel<float> m(tiny_config(classes));
  for (auto& p : m.parameters()) std::fill(p.data().begin(), p.data().end(), 0.0f);
  m.classifier.bias.data()[winner] = 1.0f;
  return m;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK(c.epochs == 50);
  CHECK(c.batch_size == 64);
  CHECK(c.lr == 1e-3);
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.epochs = 1;
  c.mode = TrainMode::MixMatch;
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.batch_size = 2;
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);

  CHECK(parse_mode("mixmatch") == TrainMode::MixMatch);
  CHECK(mode_name(TrainMode::Supervised) == "supervised");
  CHECK_THROWS_AS(parse_mode("teacher"), InvalidArgument);
}

TEST_CASE("loss falls on a fixed seed") {
  const Dataset ds = synth({sigsyn::Modulation::BPSK, sigsyn::Modulation::QPSK}, {20}, 4, 2);
  REQUIRE(ds.records.size() == 8);
  drsn::DrsnModel<float> m(tiny_config());
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.lr = 1e-2;
  cfg.steps_per_epoch = 15;
  const auto r = train::train(m, ds, Dataset{}, cfg);
  REQUIRE(r.steps.size() == 15);
  REQUIRE(r.epochs.size() == 1);
  CHECK(r.steps.back().loss < r.steps.front().loss);
  CHECK(r.epochs[0].steps == 15);
  double mean = 0;
  for (const auto& s : r.steps) mean += s.loss;
  CHECK(r.epochs[0].loss == doctest::Approx(mean / 15));

  drsn::DrsnModel<float> again(tiny_config());
  const auto r2 = train::train(again, ds, Dataset{}, cfg);
  CHECK(r2.steps.back().loss == r.steps.back().loss);
}

TEST_CASE("overfits a separable noiseless set") {
  sigsyn::SynthSpec spec;
  spec.classes = {sigsyn::Modulation::BPSK, sigsyn::Modulation::QPSK};
  spec.snr_grid = {sigsyn::kNoiselessSnrDb};
  spec.per_cell = 100;
  spec.seed = 3;
  const Dataset ds = sigsyn::synth_dataset(spec);
  drsn::DrsnConfig mc;
  mc.num_classes = 2;
  drsn::DrsnModel<float> m(mc);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 20;
  double best = 0;
  std::size_t first = 0;
  train::train(m, ds, Dataset{}, cfg, &ds, [&](const EpochLog& e) {
    if (*e.val_acc == 1.0 && best < 1.0) first = e.epoch + 1;
    best = std::max(best, *e.val_acc);
  });
  CHECK(best == 1.0);
  MESSAGE("all 200 records right after epoch " << first);
}

TEST_CASE("mixmatch with labels only reduces to supervised training") {
  const Dataset ds = synth({sigsyn::Modulation::BPSK, sigsyn::Modulation::QAM16}, {10}, 12, 4);
  TrainConfig sup;
  sup.epochs = 3;
  sup.batch_size = 4;
  sup.seed = 9;
  TrainConfig semi = sup;
  semi.mode = TrainMode::MixMatch;
  semi.mixmatch.lambda_u = 0.0;
  semi.mixmatch.fixed_lambda = 1.0;
  semi.mixmatch.flip = false;
  semi.mixmatch.smooth_frac = 0.0;

  drsn::DrsnModel<float> a(tiny_config());
  drsn::DrsnModel<float> b(tiny_config());
  const auto ra = train::train(a, ds, Dataset{}, sup);
  const auto rb = train::train(b, ds, ds, semi);
  REQUIRE(ra.epochs.size() == rb.epochs.size());
  for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
    CHECK(ra.epochs[e].steps == rb.epochs[e].steps);
    CHECK(ra.epochs[e].loss == rb.epochs[e].loss);
  }
  CHECK(std::equal(a.classifier.weight.data().begin(), a.classifier.weight.data().end(),
                   b.classifier.weight.data().begin()));
}

TEST_CASE("mixmatch steps and logs") {
  const Dataset lab = synth({sigsyn::Modulation::BPSK, sigsyn::Modulation::QPSK}, {10}, 4, 5);
  Dataset unl = synth({sigsyn::Modulation::BPSK, sigsyn::Modulation::QPSK}, {10}, 10, 6);
  for (auto& r : unl.records) r.labeled = false;
  drsn::DrsnModel<float> m(tiny_config());
  TrainConfig cfg;
  cfg.mode = TrainMode::MixMatch;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  const auto r = train::train(m, lab, unl, cfg, &lab);
  CHECK(r.epochs[0].steps == 5);  // max(8, 20) / 4
  CHECK(r.steps.size() == 10);
  for (const auto& s : r.steps) {
    CHECK(s.lambda_u == 75.0);
    CHECK(s.loss == doctest::Approx(s.loss_x + 75.0 * s.loss_u).epsilon(1e-4));
  }
  CHECK(r.epochs[1].val_acc.has_value());

  CHECK_THROWS_AS(train::train(m, lab, Dataset{}, cfg), InvalidArgument);
  const Dataset other = synth({sigsyn::Modulation::BPSK, sigsyn::Modulation::QPSK,
                               sigsyn::Modulation::PAM4},
                              {10}, 4, 7);
  CHECK_THROWS_AS(train::train(m, other, unl, cfg), InvalidArgument);
}

TEST_CASE("non-finite input aborts with the step") {
  Dataset ds = synth({sigsyn::Modulation::BPSK, sigsyn::Modulation::QPSK}, {10}, 4, 8);
  ds.records[3].iq[5] = std::numeric_limits<float>::quiet_NaN();
  drsn::DrsnModel<float> m(tiny_config());
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  try {
    train::train(m, ds, Dataset{}, cfg);
    FAIL("expected an abort");
  } catch (const NonFiniteLossError& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("checkpoint policy") {
  const Dataset ds = synth({sigsyn::Modulation::BPSK, sigsyn::Modulation::QPSK}, {10}, 4, 9);
  const auto dir = temp_dir("ckpt");
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.checkpoint_path = dir / "final.wnet";
  drsn::DrsnModel<float> m(tiny_config());
  train::train(m, ds, Dataset{}, cfg);
  REQUIRE(std::filesystem::exists(dir / "final.wnet"));
  const auto loaded = drsn::load_checkpoint(dir / "final.wnet");
  CHECK(std::equal(loaded.classifier.bias.data().begin(), loaded.classifier.bias.data().end(),
                   m.classifier.bias.data().begin()));

  std::size_t seen = 0;
  cfg.checkpoint_path = dir / "per_epoch.wnet";
  train::train(m, ds, Dataset{}, cfg, &ds, [&](const EpochLog&) {
    seen += std::filesystem::exists(dir / "per_epoch.wnet");
  });
  CHECK(seen == 2);
}

TEST_CASE("argmax") {
  const float tie[3] = {1, 3, 3};
  CHECK(argmax(tie) == 1);
  const float one[1] = {-2};
  CHECK(argmax(one) == 0);
  CHECK_THROWS_AS(argmax(std::span<const float>{}), InvalidArgument);
}

TEST_CASE("summaries") {
  SUBCASE("counts") {
    std::vector<std::uint16_t> truth(500, 0);
    std::vector<std::size_t> pred(500, 0);
    std::vector<float> snr(500, 0.0f);
    for (std::size_t i = 0; i < 56; ++i) pred[i] = 1;
    const auto r = summarize({"a", "b"}, truth, pred, snr);
    CHECK(r.t == 444);
    CHECK(r.f == 56);
    CHECK(r.overall_acc == doctest::Approx(0.888).epsilon(1e-12));
    CHECK(r.confusion[0][0] == 444);
    CHECK(r.confusion[0][1] == 56);
    CHECK(r.per_class[1].total == 0);
  }
  SUBCASE("strata add up") {
    Rng rng(3);
    std::vector<std::uint16_t> truth(300);
    std::vector<std::size_t> pred(300);
    std::vector<float> snr(300);
    for (std::size_t i = 0; i < 300; ++i) {
      truth[i] = static_cast<std::uint16_t>(rng.below(3));
      pred[i] = rng.below(3);
      snr[i] = static_cast<float>(2 * static_cast<int>(rng.below(5)) - 4);
    }
    const auto r = summarize({"a", "b", "c"}, truth, pred, snr);
    std::size_t correct = 0;
    std::size_t total = 0;
    for (std::size_t k = 0; k < r.per_snr.size(); ++k) {
      correct += r.per_snr[k].correct;
      total += r.per_snr[k].total;
      if (k > 0) CHECK(r.per_snr[k - 1].snr_db < r.per_snr[k].snr_db);
    }
    CHECK(correct == r.t);
    CHECK(total == 300);
    for (std::size_t c = 0; c < 3; ++c) {
      std::size_t row = 0;
      for (std::size_t v : r.confusion[c]) row += v;
      CHECK(row == r.per_class[c].total);
    }
  }
  SUBCASE("errors") {
    const std::uint16_t truth[1] = {2};
    const std::size_t pred[1] = {0};
    const float snr[1] = {0};
    CHECK_THROWS_AS(summarize({"a", "b"}, truth, pred, snr), InvalidArgument);
    CHECK_THROWS_AS(summarize({"a", "b"}, {}, {}, {}), InvalidArgument);
  }
}

TEST_CASE("evaluation") {
  const Dataset ds = synth({sigsyn::Modulation::BPSK, sigsyn::Modulation::QPSK,
                            sigsyn::Modulation::PAM4},
                           {0, 10}, 7, 10);

  SUBCASE("constant model on a balanced set") {
    const auto r = evaluate(constant_model(3, 2), ds);
    CHECK(r.overall_acc == doctest::Approx(1.0 / 3.0));
    CHECK(r.per_class[2].accuracy == 1.0);
    CHECK(r.per_class[0].accuracy == 0.0);
    CHECK(r.per_snr.size() == 2);
    CHECK(r.confusion[0][2] == 14);
  }
  SUBCASE("order and thread independence") {
    drsn::DrsnModel<float> m(tiny_config(3));
    const auto r1 = evaluate(m, ds, 1);
    Dataset shuffled = ds;
    Rng rng(4);
    rng.shuffle(std::span<data::SignalRecord>(shuffled.records));
    CHECK(evaluate(m, shuffled, 3) == r1);
    CHECK(evaluate(m, ds, 1) == r1);
    CHECK(r1.t + r1.f == ds.records.size());
  }
  SUBCASE("a model that memorized the set is perfect") {
    drsn::DrsnModel<float> m(tiny_config(3));
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 6;
    cfg.lr = 3e-3;
    Dataset easy = synth({sigsyn::Modulation::BPSK, sigsyn::Modulation::QPSK,
                          sigsyn::Modulation::PAM4},
                         {sigsyn::kNoiselessSnrDb}, 6, 11);
    train::train(m, easy, Dataset{}, cfg);
    const auto r = evaluate(m, easy);
    if (r.overall_acc == 1.0) {
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK((i == j) == (r.confusion[i][j] > 0));
    }
    CHECK(r.overall_acc == 1.0);
  }
  CHECK_THROWS_AS(evaluate(constant_model(3, 0), Dataset{}), InvalidArgument);
}

TEST_CASE("report files") {
  std::vector<std::uint16_t> truth;
  std::vector<std::size_t> pred;
  std::vector<float> snr;
  Rng rng(5);
  for (int s = -6; s <= 12; s += 2)
    for (int i = 0; i < 20; ++i) {
      truth.push_back(static_cast<std::uint16_t>(rng.below(4)));
      pred.push_back(rng.below(4));
      snr.push_back(static_cast<float>(s));
    }
  const auto report = summarize({"BPSK", "QPSK", "8PSK", "QAM16"}, truth, pred, snr);
  CHECK(report_from_json(report_to_json(report)) == report);
  CHECK_THROWS_AS(report_from_json("{\"overall_acc\": 1}"), FormatError);
  CHECK_THROWS_AS(report_from_json("not json"), FormatError);

  const auto dir = temp_dir("report");
  const auto files = emit_report(report, dir, ReportFormat::All);
  CHECK(files == std::vector<std::string>{"acc_vs_snr.csv", "confusion.csv", "report.json"});

  const auto snr_rows = read_lines(dir / "acc_vs_snr.csv");
  CHECK(snr_rows.size() == 11);
  CHECK(snr_rows[0].rfind("snr", 0) == 0);

  const auto grid = read_lines(dir / "confusion.csv");
  CHECK(grid.size() == 5);
  for (std::size_t c = 0; c < 4; ++c) {
    std::stringstream row(grid[c + 1]);
    std::string cell;
    std::getline(row, cell, ',');
    CHECK(cell == report.per_class[c].name);
    std::size_t total = 0;
    while (std::getline(row, cell, ',')) total += std::stoul(cell);
    CHECK(total == report.per_class[c].total);
  }

  std::ifstream js(dir / "report.json");
  std::stringstream buf;
  buf << js.rdbuf();
  CHECK(report_from_json(buf.str()) == report);

  const auto json_only = temp_dir("json_only");
  CHECK(emit_report(report, json_only, ReportFormat::Json) ==
        std::vector<std::string>{"report.json"});
  CHECK_FALSE(std::filesystem::exists(json_only / "confusion.csv"));
  CHECK(parse_report_format("csv") == ReportFormat::Csv);
  CHECK_THROWS_AS(parse_report_format("xml"), InvalidArgument);
}

TEST_CASE("training log") {
  TrainResult r;
  r.epochs.push_back({0, 10, 1.5, 1.0, 0.25, std::nullopt});
  r.epochs.push_back({1, 10, 0.5, 0.25, 0.125, 0.75});
  const auto path = temp_dir("log") / "train_log.csv";
  write_train_log(r, path);
  const auto lines = read_lines(path);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "epoch,steps,loss,loss_x,loss_u,val_acc");
  CHECK(lines[1].rfind("0,10,1.5,1,0.25,", 0) == 0);
  CHECK(lines[2] == "1,10,0.5,0.25,0.125,0.750000");
}
