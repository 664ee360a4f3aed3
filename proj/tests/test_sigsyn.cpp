#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "wsr/dataio.hpp"
#include "wsr/error.hpp"
#include "wsr/rng.hpp"
#include "wsr/sigsyn.hpp"

using namespace wsr;
using namespace wsr::sigsyn;

namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.classes = {Modulation::BPSK, Modulation::QPSK, Modulation::QAM16, Modulation::GFSK};
  s.snr_grid = {0, 10};
  s.per_cell = 5;
  s.seed = 17;
  return s;
}

double window_power(const data::SignalRecord& r) {
  double p = 0;
  for (float v : r.iq) p += static_cast<double>(v) * v;
  return p / static_cast<double>(r.length());
}

}  // namespace

TEST_CASE("modulation names") {
  CHECK(all_modulations().size() == 8);
  for (Modulation m : all_modulations()) CHECK(parse_modulation(modulation_name(m)) == m);
  CHECK(modulation_name(Modulation::PSK8) == "8PSK");
  CHECK_THROWS_AS(parse_modulation("WBFM"), InvalidArgument);
  CHECK_THROWS_AS(constellation(Modulation::GFSK), InvalidArgument);
}

TEST_CASE("constellations are unit power and Gray mapped") {
  const std::vector<cdouble> bpsk = constellation(Modulation::BPSK);
  CHECK(bpsk[0] == cdouble(1, 0));
  CHECK(bpsk[1] == cdouble(-1, 0));

  for (Modulation m : all_modulations()) {
    if (!is_linear(m)) continue;
    const auto pts = constellation(m);
    CAPTURE(modulation_name(m));
    REQUIRE(pts.size() == alphabet_size(m));
    double power = 0;
    for (auto p : pts) power += std::norm(p);
    CHECK(std::abs(power / static_cast<double>(pts.size()) - 1.0) < 1e-12);

    double dmin = 1e9;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j) dmin = std::min(dmin, std::abs(pts[i] - pts[j]));
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        if (std::abs(pts[i] - pts[j]) < dmin * (1 + 1e-9))
          CHECK(std::popcount(static_cast<unsigned>(i ^ j)) == 1);
  }
  for (auto p : constellation(Modulation::QPSK)) CHECK(std::abs(std::abs(p) - 1.0) < 1e-12);
}

TEST_CASE("root-raised-cosine taps") {
  const auto h = rrc_taps(0.35, 8, 10);
  CHECK(h.size() == 81);
  double energy = 0;
  for (double v : h) energy += v * v;
  CHECK(energy == doctest::Approx(8.0).epsilon(1e-12));
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(h[h.size() - 1 - i]));
  CHECK(std::max_element(h.begin(), h.end()) - h.begin() == 40);
  // Roll-off 1 hits the special points t = +-1/(4 beta).
  for (double v : rrc_taps(1.0, 4, 6)) CHECK(std::isfinite(v));
}

TEST_CASE("modulated waveforms") {
  SynthSpec spec = small_spec();
  Rng rng(1);
  std::vector<std::uint32_t> bits(400);
  for (auto& b : bits) b = static_cast<std::uint32_t>(rng.below(2));

  SUBCASE("frequency-shift classes have unit envelope") {
    for (Modulation m : {Modulation::GFSK, Modulation::CPFSK}) {
      const auto x = modulate(m, bits, spec);
      CHECK(x.size() == bits.size() * 8);
      for (auto v : x) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);
    }
  }
  SUBCASE("CPFSK advances phase by pi h per symbol") {
    std::vector<std::uint32_t> zeros(4, 0);
    const auto x = modulate(Modulation::CPFSK, zeros, spec);
    const double step = std::arg(x[16] / x[8]);
    CHECK(step == doctest::Approx(std::numbers::pi * kCpfskIndex).epsilon(1e-9));
  }
  SUBCASE("shaped linear classes carry unit power away from the edges") {
    std::vector<std::uint32_t> syms(2000);
    for (auto& s : syms) s = static_cast<std::uint32_t>(rng.below(16));
    const auto x = modulate(Modulation::QAM16, syms, spec);
    double p = 0;
    for (std::size_t i = 800; i < x.size() - 800; ++i) p += std::norm(x[i]);
    CHECK(p / static_cast<double>(x.size() - 1600) == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("out of range symbols") {
    std::vector<std::uint32_t> bad{0, 2};
    CHECK_THROWS_AS(modulate(Modulation::BPSK, bad, spec), InvalidArgument);
  }
}

TEST_CASE("channel") {
  ChannelConfig cfg;
  cfg.snr_db = 10;
  CHECK(noise_variance(cfg) == doctest::Approx(0.1).epsilon(1e-12));
  cfg.gain = {0, 2};
  CHECK(noise_variance(cfg) == doctest::Approx(0.4).epsilon(1e-12));
  cfg.snr_db = 150;
  CHECK(noise_variance(cfg) == 0.0);

  SUBCASE("noiseless output is the rotated signal") {
    std::vector<cdouble> s{{1, 0}, {0, 1}, {-0.5, 0.5}, {0.3, -0.2}};
    ChannelConfig c;
    c.snr_db = kNoiselessSnrDb;
    c.phase = 0.7;
    c.cfo = 0.01;
    Rng rng(3);
    const auto out = apply_channel(s, c, rng);
    for (std::size_t l = 0; l < s.size(); ++l) {
      const cdouble rot = std::polar(1.0, 2 * std::numbers::pi * 0.01 * static_cast<double>(l) + 0.7);
      CHECK(std::abs(out[l] - rot * s[l]) < 1e-12);
    }
  }

  SUBCASE("realized SNR matches the request") {
    Rng sym_rng(5);
    const auto pts = constellation(Modulation::QPSK);
    std::vector<cdouble> s(100000);
    for (auto& v : s) v = pts[sym_rng.below(4)];
    for (double snr = -6; snr <= 12; snr += 2) {
      ChannelConfig c;
      c.snr_db = snr;
      c.phase = 0.0;
      Rng rng(static_cast<std::uint64_t>(snr + 100));
      const auto out = apply_channel(s, c, rng);
      double ps = 0;
      double pn = 0;
      double pi = 0;
      for (std::size_t l = 0; l < s.size(); ++l) {
        ps += std::norm(s[l]);
        pn += std::norm(out[l] - s[l]);
        pi += std::pow((out[l] - s[l]).real(), 2);
      }
      const double realized = 10 * std::log10(ps / pn);
      CAPTURE(snr);
      CHECK(std::abs(realized - snr) < 0.2);
      CHECK(pi / pn == doctest::Approx(0.5).epsilon(0.02));
    }
  }

  std::vector<cdouble> one{{1, 0}};
  ChannelConfig zero_gain;
  zero_gain.gain = 0;
  Rng rng(1);
  CHECK_THROWS_AS(apply_channel(one, zero_gain, rng), InvalidArgument);
}

TEST_CASE("records") {
  const SynthSpec spec = small_spec();
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    auto a = synth_record(spec, c, 4.0, 99);
    auto b = synth_record(spec, c, 4.0, 99);
    CHECK(a == b);
    CHECK(a.iq.size() == 2 * spec.length);
    CHECK(a.class_idx == c);
    CHECK(a.snr_db == 4.0f);
    CHECK(a.labeled);
    CHECK(std::abs(window_power(a) - 1.0) < 1e-6);
    CHECK_FALSE(synth_record(spec, c, 4.0, 100) == a);
  }
  CHECK_THROWS_AS(synth_record(spec, 4, 0.0, 1), InvalidArgument);

  SynthSpec tiny = spec;
  tiny.symbols_per_record = 4;
  CHECK_THROWS_AS(synth_record(tiny, 0, 0.0, 1), InvalidArgument);
}

TEST_CASE("datasets") {
  SynthSpec spec = small_spec();
  const auto ds = synth_dataset(spec);
  CHECK(ds.records.size() == 4 * 2 * 5);
  CHECK(ds.header.count == 40);
  CHECK(ds.header.length == 128);
  CHECK(ds.header.class_names == std::vector<std::string>{"BPSK", "QPSK", "QAM16", "GFSK"});
  CHECK(ds.header.snr_grid == spec.snr_grid);
  std::map<std::pair<int, float>, int> cells;
  for (const auto& r : ds.records) ++cells[{r.class_idx, r.snr_db}];
  CHECK(cells.size() == 8);
  for (const auto& [key, n] : cells) CHECK(n == 5);

  // Records are the same no matter how the grid is laid out.
  SynthSpec reordered = spec;
  reordered.classes = {Modulation::GFSK, Modulation::BPSK};
  reordered.snr_grid = {10, 0};
  const auto other = synth_dataset(reordered);
  const auto& first = other.records[5 * 2];  // BPSK at 10 dB, repetition 0
  CHECK(first.iq == ds.records[5].iq);

  CHECK(data::dataset_digest(synth_dataset(spec)) == data::dataset_digest(ds));
  spec.seed = 18;
  CHECK(data::dataset_digest(synth_dataset(spec)) != data::dataset_digest(ds));

  spec.max_records = 39;
  CHECK_THROWS_AS(synth_dataset(spec), InvalidArgument);
  spec.max_records = 10'000'000;
  spec.per_cell = 0;
  CHECK_THROWS_AS(synth_dataset(spec), InvalidArgument);
}

TEST_CASE("noiseless BPSK and QPSK windows are separable") {
  SynthSpec spec;
  spec.classes = {Modulation::BPSK, Modulation::QPSK};
  spec.snr_grid = {kNoiselessSnrDb};
  spec.per_cell = 100;
  spec.max_cfo = 0.0;
  spec.seed = 4;
  const auto ds = synth_dataset(spec);
  // A noiseless real constellation rotated by one phase is collinear, so
  // |sum x^2| = sum |x|^2 exactly; QPSK never is.
  std::size_t correct = 0;
  for (const auto& r : ds.records) {
    const std::size_t L = r.length();
    std::complex<double> s2 = 0;
    double p = 0;
    for (std::size_t l = 0; l < L; ++l) {
      const std::complex<double> x(r.iq[l], r.iq[L + l]);
      s2 += x * x;
      p += std::norm(x);
    }
    const int guess = std::abs(s2) / p > 0.999 ? 0 : 1;
    correct += guess == r.class_idx;
  }
  CHECK(correct == ds.records.size());
}
