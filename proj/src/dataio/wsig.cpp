#include "wsr/dataio.hpp"

#include "json.hpp"
#include "wsr/binio.hpp"
#include "wsr/digest.hpp"
#include "wsr/error.hpp"

namespace wsr::data {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "WSIG";

json header_to_json(const DatasetHeader& h) {
  return json{{"version", h.version},   {"length", h.length},     {"classes", h.class_names},
              {"count", h.count},       {"snr_grid", h.snr_grid}, {"provenance", h.provenance}};
}

DatasetHeader header_from_json(const json& j) {
  DatasetHeader h;
  h.version = j.at("version").get<std::uint32_t>();
  h.length = j.at("length").get<std::size_t>();
  h.class_names = j.at("classes").get<std::vector<std::string>>();
  h.count = j.at("count").get<std::size_t>();
  h.snr_grid = j.at("snr_grid").get<std::vector<double>>();
  h.provenance = j.value("provenance", std::string());
  return h;
}

void check_header(const DatasetHeader& h) {
  for (std::size_t i = 0; i < h.class_names.size(); ++i)
    for (std::size_t j = i + 1; j < h.class_names.size(); ++j)
      if (h.class_names[i] == h.class_names[j])
        throw FormatError("duplicate class name '" + h.class_names[i] + "'");
  if (h.class_names.size() > 65536) throw FormatError("too many classes for a u16 index");
}

}  // namespace

std::string serialize_wsig(const Dataset& ds) {
  const DatasetHeader& h = ds.header;
  if (h.count != ds.records.size())
    throw InvalidArgument("WSIG header count " + std::to_string(h.count) + " but " +
                          std::to_string(ds.records.size()) + " records");
  try {
    check_header(h);
  } catch (const FormatError& e) {
    throw InvalidArgument(e.what());
  }
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const SignalRecord& r = ds.records[i];
    if (r.iq.size() != 2 * h.length)
      throw InvalidArgument("record " + std::to_string(i) + " has " + std::to_string(r.iq.size()) +
                            " values, header length implies " + std::to_string(2 * h.length));
    if (r.class_idx >= h.class_names.size())
      throw InvalidArgument("record " + std::to_string(i) + " has class index " +
                            std::to_string(r.class_idx) + " beyond the class table");
  }

  const std::string header = header_to_json(h).dump();
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kWsigVersion);
  w.u64(header.size());
  w.bytes(header);
  for (const SignalRecord& r : ds.records) {
    w.u16(r.class_idx);
    w.f32(r.snr_db);
    w.u8(r.labeled ? 1 : 0);
    for (float v : r.iq) w.f32(v);
  }
  return w.take();
}

Dataset parse_wsig(std::string_view bytes) {
  binio::Reader rd(bytes);
  if (rd.remaining() < kMagic.size() || rd.bytes(kMagic.size(), "magic") != kMagic)
    throw BadMagicError("not a WSIG file (bad magic)");
  const std::uint32_t version = rd.u32("version");
  if (version != kWsigVersion)
    throw VersionError("unsupported WSIG version " + std::to_string(version) + " (expected " +
                       std::to_string(kWsigVersion) + ")");
  const std::uint64_t header_len = rd.u64("header length");
  if (header_len > rd.remaining())
    throw TruncatedError("WSIG header length " + std::to_string(header_len) +
                         " exceeds file size");

  Dataset ds;
  try {
    ds.header = header_from_json(json::parse(rd.bytes(header_len, "header")));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed WSIG header: ") + e.what());
  }
  check_header(ds.header);
  if (ds.header.version != kWsigVersion)
    throw VersionError("WSIG header declares version " + std::to_string(ds.header.version));

  const std::size_t L = ds.header.length;
  const std::size_t record_bytes = 2 + 4 + 1 + 8 * L;
  const std::size_t n = ds.header.count;
  if (n > 0 && rd.remaining() / record_bytes < n)
    throw TruncatedError("WSIG header promises " + std::to_string(n) + " records, payload holds " +
                         std::to_string(rd.remaining() / record_bytes));
  if (rd.remaining() != n * record_bytes)
    throw CountMismatchError("WSIG payload has " + std::to_string(rd.remaining() - n * record_bytes) +
                             " bytes beyond the " + std::to_string(n) + " declared records");

  ds.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    SignalRecord& r = ds.records[i];
    r.class_idx = rd.u16("class index");
    r.snr_db = rd.f32("snr");
    const std::uint8_t flag = rd.u8("labeled flag");
    if (flag > 1) throw FormatError("record " + std::to_string(i) + " has labeled flag " +
                                    std::to_string(flag));
    r.labeled = flag == 1;
    if (r.class_idx >= ds.header.class_names.size())
      throw FormatError("record " + std::to_string(i) + " has class index " +
                        std::to_string(r.class_idx) + " beyond the class table");
    r.iq.resize(2 * L);
    for (float& v : r.iq) v = rd.f32("samples");
  }
  return ds;
}

void write_wsig(const Dataset& ds, const std::filesystem::path& path) {
  binio::write_file(path, serialize_wsig(ds));
}

Dataset read_wsig(const std::filesystem::path& path) { return parse_wsig(binio::read_file(path)); }

std::string dataset_digest(const Dataset& ds) { return sha256_hex(serialize_wsig(ds)); }

}  // namespace wsr::data
