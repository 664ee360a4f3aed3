#include "wsr/sigsyn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "wsr/error.hpp"

namespace wsr::sigsyn {

namespace {

constexpr std::array kAll = {Modulation::BPSK,  Modulation::QPSK,  Modulation::PSK8,
                             Modulation::QAM16, Modulation::QAM64, Modulation::PAM4,
                             Modulation::GFSK,  Modulation::CPFSK};

constexpr std::array<std::string_view, 8> kNames = {"BPSK",  "QPSK", "8PSK", "QAM16",
                                                    "QAM64", "PAM4", "GFSK", "CPFSK"};

// Position on an axis (or circle) whose Gray label is v.
std::uint32_t gray_position(std::uint32_t v) {
  std::uint32_t p = v;
  for (std::uint32_t s = v >> 1; s; s >>= 1) p ^= s;
  return p;
}

// Odd levels -(n-1) .. (n-1) indexed by Gray label.
double gray_level(std::uint32_t v, std::uint32_t n) {
  return 2.0 * gray_position(v) - (n - 1.0);
}

std::vector<double> gaussian_taps(double bt, std::size_t sps, std::size_t span) {
  const std::size_t n = span * sps + 1;
  std::vector<double> g(n);
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (static_cast<double>(i) - static_cast<double>(n - 1) / 2.0) / sps;
    g[i] = std::exp(-2.0 * std::numbers::pi * std::numbers::pi * bt * bt * t * t / std::log(2.0));
    s += g[i];
  }
  for (double& v : g) v /= s;
  return g;
}

std::vector<cdouble> fsk(std::span<const std::uint32_t> symbols, std::size_t sps, double index,
                         const std::vector<double>* shaping) {
  const std::size_t n = symbols.size() * sps;
  std::vector<double> freq(n);
  for (std::size_t k = 0; k < symbols.size(); ++k)
    for (std::size_t i = 0; i < sps; ++i) freq[k * sps + i] = symbols[k] ? -1.0 : 1.0;
  if (shaping) {
    const auto& g = *shaping;
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(g.size() / 2);
    std::vector<double> smooth(n, 0.0);
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      double acc = 0;
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(g.size()); ++j) {
        std::ptrdiff_t src = i + j - half;
        src = std::clamp<std::ptrdiff_t>(src, 0, static_cast<std::ptrdiff_t>(n) - 1);
        acc += g[static_cast<std::size_t>(j)] * freq[static_cast<std::size_t>(src)];
      }
      smooth[static_cast<std::size_t>(i)] = acc;
    }
    freq.swap(smooth);
  }
  std::vector<cdouble> out(n);
  double phase = 0;
  const double step = std::numbers::pi * index / static_cast<double>(sps);
  for (std::size_t i = 0; i < n; ++i) {
    phase += step * freq[i];
    out[i] = std::polar(1.0, phase);
  }
  return out;
}

}  // namespace

std::span<const Modulation> all_modulations() { return kAll; }

std::string_view modulation_name(Modulation m) { return kNames[static_cast<std::size_t>(m)]; }

Modulation parse_modulation(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return kAll[i];
  throw InvalidArgument("unknown modulation class '" + std::string(name) + "'");
}

std::size_t alphabet_size(Modulation m) {
  switch (m) {
    case Modulation::BPSK: return 2;
    case Modulation::QPSK: return 4;
    case Modulation::PSK8: return 8;
    case Modulation::QAM16: return 16;
    case Modulation::QAM64: return 64;
    case Modulation::PAM4: return 4;
    case Modulation::GFSK: return 2;
    case Modulation::CPFSK: return 2;
  }
  throw InvalidArgument("unknown modulation");
}

bool is_linear(Modulation m) { return m != Modulation::GFSK && m != Modulation::CPFSK; }

std::vector<cdouble> constellation(Modulation m) {
  const std::size_t M = alphabet_size(m);
  std::vector<cdouble> pts(M);
  switch (m) {
    case Modulation::BPSK:
      pts = {{1.0, 0.0}, {-1.0, 0.0}};
      break;
    case Modulation::QPSK:
      for (std::uint32_t v = 0; v < 4; ++v)
        pts[v] = cdouble(1.0 - 2.0 * ((v >> 1) & 1), 1.0 - 2.0 * (v & 1)) / std::sqrt(2.0);
      break;
    case Modulation::PSK8:
      for (std::uint32_t v = 0; v < 8; ++v)
        pts[v] = std::polar(1.0, 2.0 * std::numbers::pi * gray_position(v) / 8.0);
      break;
    case Modulation::PAM4:
      for (std::uint32_t v = 0; v < 4; ++v) pts[v] = gray_level(v, 4) / std::sqrt(5.0);
      break;
    case Modulation::QAM16:
    case Modulation::QAM64: {
      const std::uint32_t bits = m == Modulation::QAM16 ? 2 : 3;
      const std::uint32_t side = 1u << bits;
      const double norm = std::sqrt(2.0 * (static_cast<double>(side) * side - 1.0) / 3.0);
      for (std::uint32_t v = 0; v < M; ++v) {
        const std::uint32_t hi = v >> bits, lo = v & (side - 1);
        pts[v] = cdouble(gray_level(hi, side), gray_level(lo, side)) / norm;
      }
      break;
    }
    default:
      throw InvalidArgument(std::string(modulation_name(m)) + " has no constellation");
  }
  return pts;
}

void SynthSpec::validate() const {
  if (classes.empty()) throw InvalidArgument("SynthSpec: classes must be nonempty");
  if (snr_grid.empty()) throw InvalidArgument("SynthSpec: snr_grid must be nonempty");
  for (double s : snr_grid)
    if (!std::isfinite(s)) throw InvalidArgument("SynthSpec: snr values must be finite");
  if (per_cell < 1) throw InvalidArgument("SynthSpec: per_cell must be >= 1");
  if (length < 3) throw InvalidArgument("SynthSpec: length must be >= 3");
  if (samples_per_symbol < 1) throw InvalidArgument("SynthSpec: samples_per_symbol must be >= 1");
  if (!(rrc_rolloff > 0.0 && rrc_rolloff <= 1.0))
    throw InvalidArgument("SynthSpec: rrc_rolloff must lie in (0, 1]");
  if (rrc_span < 2) throw InvalidArgument("SynthSpec: rrc_span must be >= 2");
  if (!(max_cfo >= 0.0 && max_cfo < 0.5)) throw InvalidArgument("SynthSpec: max_cfo out of range");
}

std::vector<double> rrc_taps(double beta, std::size_t sps, std::size_t span) {
  const std::size_t half = (span / 2) * sps;
  std::vector<double> h(2 * half + 1);
  const double pi = std::numbers::pi;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double t = (static_cast<double>(i) - static_cast<double>(half)) / sps;
    double v;
    if (t == 0.0) {
      v = 1.0 - beta + 4.0 * beta / pi;
    } else if (std::abs(std::abs(4.0 * beta * t) - 1.0) < 1e-12) {
      v = beta / std::sqrt(2.0) *
          ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) +
           (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
    } else {
      v = (std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta))) /
          (pi * t * (1.0 - 16.0 * beta * beta * t * t));
    }
    h[i] = v;
  }
  double energy = 0;
  for (double v : h) energy += v * v;
  const double g = std::sqrt(static_cast<double>(sps) / energy);
  for (double& v : h) v *= g;
  return h;
}

std::vector<cdouble> modulate(Modulation m, std::span<const std::uint32_t> symbols,
                              const SynthSpec& spec) {
  const std::size_t M = alphabet_size(m);
  for (std::uint32_t s : symbols)
    if (s >= M)
      throw InvalidArgument("symbol " + std::to_string(s) + " out of range for " +
                            std::string(modulation_name(m)));
  const std::size_t sps = spec.samples_per_symbol;
  if (m == Modulation::CPFSK) return fsk(symbols, sps, kCpfskIndex, nullptr);
  if (m == Modulation::GFSK) {
    const auto g = gaussian_taps(kGfskBt, sps, 4);
    return fsk(symbols, sps, kGfskIndex, &g);
  }

  const auto pts = constellation(m);
  const auto h = rrc_taps(spec.rrc_rolloff, sps, spec.rrc_span);
  const std::ptrdiff_t delay = static_cast<std::ptrdiff_t>(h.size() / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(symbols.size() * sps);
  std::vector<cdouble> out(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const cdouble a = pts[symbols[k]];
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(k * sps) - delay;
    for (std::size_t j = 0; j < h.size(); ++j) {
      const std::ptrdiff_t idx = base + static_cast<std::ptrdiff_t>(j);
      if (idx >= 0 && idx < n) out[static_cast<std::size_t>(idx)] += a * h[j];
    }
  }
  return out;
}

double noise_variance(const ChannelConfig& cfg) {
  if (cfg.snr_db >= kNoiselessSnrDb) return 0.0;
  return std::norm(cfg.gain) / std::pow(10.0, cfg.snr_db / 10.0);
}

std::vector<cdouble> apply_channel(std::span<const cdouble> signal, const ChannelConfig& cfg,
                                   Rng& rng) {
  if (!std::isfinite(cfg.snr_db)) throw InvalidArgument("apply_channel: snr_db must be finite");
  if (std::abs(cfg.gain) == 0.0) throw InvalidArgument("apply_channel: channel gain must be nonzero");
  const double phase = cfg.phase ? *cfg.phase : rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double sigma = std::sqrt(noise_variance(cfg) / 2.0);
  std::vector<cdouble> out(signal.size());
  for (std::size_t l = 0; l < signal.size(); ++l) {
    const double theta = 2.0 * std::numbers::pi * cfg.cfo * static_cast<double>(l) + phase;
    out[l] = cfg.gain * std::polar(1.0, theta) * signal[l];
    if (sigma > 0.0) out[l] += cdouble(sigma * rng.normal(), sigma * rng.normal());
  }
  return out;
}

data::SignalRecord synth_record(const SynthSpec& spec, std::size_t class_idx, double snr_db,
                                std::uint64_t seed) {
  spec.validate();
  if (class_idx >= spec.classes.size())
    throw InvalidArgument("synth_record: class index " + std::to_string(class_idx) +
                          " out of range");
  if (!std::isfinite(snr_db)) throw InvalidArgument("synth_record: snr_db must be finite");
  const Modulation m = spec.classes[class_idx];
  const std::size_t sps = spec.samples_per_symbol, L = spec.length;
  const std::size_t guard = (spec.rrc_span / 2 + 1) * sps;
  const std::size_t n_sym = spec.symbols_per_record
                                ? spec.symbols_per_record
                                : (L + sps - 1) / sps + 2 * (spec.rrc_span / 2 + 1) + 2;
  const std::size_t total = n_sym * sps;
  if (total < L + 2 * guard)
    throw InvalidArgument("synth_record: window length " + std::to_string(L) +
                          " exceeds the usable generated length " +
                          std::to_string(total > 2 * guard ? total - 2 * guard : 0));

  Rng rng(seed);
  std::vector<std::uint32_t> symbols(n_sym);
  for (auto& s : symbols) s = static_cast<std::uint32_t>(rng.below(alphabet_size(m)));
  const auto clean = modulate(m, symbols, spec);

  ChannelConfig ch;
  ch.snr_db = snr_db;
  ch.cfo = rng.uniform(-spec.max_cfo, spec.max_cfo);
  const auto rx = apply_channel(clean, ch, rng);

  const std::size_t start = guard + rng.below(total - 2 * guard - L + 1);
  double power = 0;
  for (std::size_t l = 0; l < L; ++l) power += std::norm(rx[start + l]);
  power /= static_cast<double>(L);
  const double g = power > 0 ? 1.0 / std::sqrt(power) : 1.0;

  data::SignalRecord rec;
  rec.iq.resize(2 * L);
  for (std::size_t l = 0; l < L; ++l) {
    rec.iq[l] = static_cast<float>(rx[start + l].real() * g);
    rec.iq[L + l] = static_cast<float>(rx[start + l].imag() * g);
  }
  rec.class_idx = static_cast<std::uint16_t>(class_idx);
  rec.snr_db = static_cast<float>(snr_db);
  rec.labeled = true;
  return rec;
}

std::uint64_t record_seed(const SynthSpec& spec, Modulation m, double snr_db, std::size_t rep) {
  return derive_seed(spec.seed, {static_cast<std::uint64_t>(m),
                                 static_cast<std::uint64_t>(std::llround(snr_db * 1000.0)),
                                 static_cast<std::uint64_t>(rep)});
}

data::Dataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  const std::size_t cells = spec.classes.size() * spec.snr_grid.size();
  if (spec.per_cell > spec.max_records / cells)
    throw InvalidArgument("synth_dataset: " + std::to_string(cells) + " cells x " +
                          std::to_string(spec.per_cell) + " records exceeds the cap of " +
                          std::to_string(spec.max_records));
  data::Dataset ds;
  ds.header.length = spec.length;
  for (Modulation m : spec.classes) ds.header.class_names.emplace_back(modulation_name(m));
  ds.header.snr_grid = spec.snr_grid;
  std::ostringstream prov;
  prov << "sigsyn seed=" << spec.seed << " sps=" << spec.samples_per_symbol
       << " rolloff=" << spec.rrc_rolloff << " max_cfo=" << spec.max_cfo;
  ds.header.provenance = prov.str();

  ds.records.reserve(cells * spec.per_cell);
  for (std::size_t c = 0; c < spec.classes.size(); ++c)
    for (double snr : spec.snr_grid)
      for (std::size_t r = 0; r < spec.per_cell; ++r)
        ds.records.push_back(synth_record(spec, c, snr, record_seed(spec, spec.classes[c], snr, r)));
  ds.header.count = ds.records.size();
  return ds;
}

}  // namespace wsr::sigsyn
