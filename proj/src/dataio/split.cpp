#include "wsr/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "wsr/error.hpp"
#include "wsr/rng.hpp"

namespace wsr::data {

void SplitSpec::validate() const {
  if (!(test_frac > 0.0 && test_frac < 1.0))
    throw InvalidArgument("SplitSpec: test_frac must lie in (0, 1)");
  if (!(labeled_frac > 0.0 && labeled_frac <= 1.0))
    throw InvalidArgument("SplitSpec: labeled_frac must lie in (0, 1]");
}

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
}

namespace {

std::int64_t snr_key(double snr) { return std::llround(snr * 1000.0); }

Dataset empty_like(const Dataset& ds, const std::string& part, const SplitSpec& spec) {
  Dataset out;
  out.header = ds.header;
  out.header.count = 0;
  std::ostringstream prov;
  if (!ds.header.provenance.empty()) prov << ds.header.provenance << " | ";
  prov << "split seed=" << spec.seed << " test_frac=" << spec.test_frac
       << " labeled_frac=" << spec.labeled_frac << " part=" << part;
  out.header.provenance = prov.str();
  return out;
}

}  // namespace

Split stratified_split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  std::map<std::pair<std::uint16_t, std::int64_t>, std::vector<std::size_t>> cells;
  for (std::size_t c = 0; c < ds.header.class_names.size(); ++c)
    for (double snr : ds.header.snr_grid) cells[{static_cast<std::uint16_t>(c), snr_key(snr)}];
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    cells[{ds.records[i].class_idx, snr_key(ds.records[i].snr_db)}].push_back(i);

  enum Part : unsigned char { kTest, kLabeled, kUnlabeled };
  std::vector<Part> part(ds.records.size(), kUnlabeled);
  for (auto& [key, members] : cells) {
    if (members.empty())
      throw InvalidArgument("stratified_split: empty cell (class " +
                            std::to_string(key.first) + ", snr " +
                            std::to_string(static_cast<double>(key.second) / 1000.0) + ")");
    Rng rng(derive_seed(spec.seed, {key.first, static_cast<std::uint64_t>(key.second)}));
    rng.shuffle(std::span<std::size_t>(members));
    const std::size_t n = members.size();
    const std::size_t n_test = std::min(n, round_half_up(spec.test_frac * static_cast<double>(n)));
    const std::size_t rest = n - n_test;
    const std::size_t n_lab =
        std::min(rest, round_half_up(spec.labeled_frac * static_cast<double>(rest)));
    for (std::size_t j = 0; j < n; ++j)
      part[members[j]] = j < n_test ? kTest : (j < n_test + n_lab ? kLabeled : kUnlabeled);
  }

  Split out{empty_like(ds, "labeled", spec), empty_like(ds, "unlabeled", spec),
            empty_like(ds, "test", spec)};
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    SignalRecord r = ds.records[i];
    switch (part[i]) {
      case kTest:
        r.labeled = true;
        out.test.records.push_back(std::move(r));
        break;
      case kLabeled:
        r.labeled = true;
        out.labeled.records.push_back(std::move(r));
        break;
      case kUnlabeled:
        r.labeled = false;
        out.unlabeled.records.push_back(std::move(r));
        break;
    }
  }
  for (Dataset* d : {&out.labeled, &out.unlabeled, &out.test}) d->header.count = d->records.size();
  return out;
}

}  // namespace wsr::data
