#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "wsr/dataset.hpp"
#include "wsr/rng.hpp"

namespace wsr::sigsyn {

using cdouble = std::complex<double>;

enum class Modulation : std::uint8_t { BPSK, QPSK, PSK8, QAM16, QAM64, PAM4, GFSK, CPFSK };

std::span<const Modulation> all_modulations();
std::string_view modulation_name(Modulation m);
// Throws InvalidArgument for names outside the supported set.
Modulation parse_modulation(std::string_view name);
std::size_t alphabet_size(Modulation m);
bool is_linear(Modulation m);

// Gray-mapped, unit-mean-power points indexed by symbol value. Linear
// classes only.
std::vector<cdouble> constellation(Modulation m);

// Frequency-shift keying conventions: binary, symbol 0 -> +deviation.
inline constexpr double kCpfskIndex = 0.5;
inline constexpr double kGfskIndex = 0.35;
inline constexpr double kGfskBt = 0.5;

struct SynthSpec {
  std::vector<Modulation> classes;
  std::vector<double> snr_grid = {-6, -4, -2, 0, 2, 4, 6, 8, 10, 12};
  std::size_t per_cell = 100;
  std::size_t length = 128;
  std::size_t samples_per_symbol = 8;
  double rrc_rolloff = 0.35;
  std::size_t rrc_span = 10;  // symbols
  double max_cfo = 1e-3;      // cycles per sample
  std::size_t symbols_per_record = 0;  // 0: just enough for one window
  std::size_t max_records = 10'000'000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ChannelConfig {
  double snr_db = 100.0;
  cdouble gain{1.0, 0.0};
  double cfo = 0.0;  // cycles per sample
  std::optional<double> phase;  // radians; drawn uniformly when absent
};

// snr_db at or above this is treated as a noiseless channel.
inline constexpr double kNoiselessSnrDb = 100.0;

// Root-raised-cosine taps, 2 * (span / 2) * sps + 1 long, scaled so that
// sum(h^2) = sps (unit output power for unit-power symbols).
std::vector<double> rrc_taps(double rolloff, std::size_t sps, std::size_t span);

// Complex baseband of symbols.size() * sps samples. Linear classes are
// pulse shaped with the RRC filter; GFSK and CPFSK integrate phase and
// have unit envelope.
std::vector<cdouble> modulate(Modulation m, std::span<const std::uint32_t> symbols,
                              const SynthSpec& spec);

// Total complex noise power sigma^2 = |h|^2 / 10^(snr/10); 0 when noiseless.
double noise_variance(const ChannelConfig& cfg);

// h e^{j(2 pi cfo l + phase)} s(l) + n(l), n complex Gaussian with
// variance sigma^2 / 2 per component.
std::vector<cdouble> apply_channel(std::span<const cdouble> signal, const ChannelConfig& cfg,
                                   Rng& rng);

// Deterministic in (spec, class_idx, snr_db, seed). The window is cropped
// away from the filter transients and normalized to unit mean power.
data::SignalRecord synth_record(const SynthSpec& spec, std::size_t class_idx, double snr_db,
                                std::uint64_t seed);

// Seed of one record: derive_seed(spec.seed, {modulation id,
// round(1000 * snr_db), repetition}).
std::uint64_t record_seed(const SynthSpec& spec, Modulation m, double snr_db, std::size_t rep);

// Class-major, then SNR, then repetition.
data::Dataset synth_dataset(const SynthSpec& spec);

}  // namespace wsr::sigsyn
