#include "wsr/checkpoint.hpp"

#include "wsr/binio.hpp"
#include "wsr/error.hpp"

namespace wsr::drsn {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "WNET";

struct ManifestEntry {
  std::string name;
  ag::Shape shape;
  std::uint64_t offset = 0;
};

std::vector<ManifestEntry> read_manifest(const json& header) {
  std::vector<ManifestEntry> out;
  for (const json& p : header.at("params"))
    out.push_back({p.at("name").get<std::string>(), p.at("shape").get<ag::Shape>(),
                   p.at("offset").get<std::uint64_t>()});
  return out;
}

// Checks a manifest against the model's own parameter list and copies the
// payload in. Nothing is written to the model until everything validates.
void fill_from_payload(DrsnModel<float>& model, const std::vector<ManifestEntry>& manifest,
                       binio::Reader& reader) {
  auto params = model.named_parameters();
  if (manifest.size() != params.size())
    throw ParamMismatchError("checkpoint lists " + std::to_string(manifest.size()) +
                             " parameters, model has " + std::to_string(params.size()));
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = manifest[i];
    const auto& p = params[i];
    if (m.name != p.name)
      throw ParamMismatchError("checkpoint parameter " + std::to_string(i) + " is '" + m.name +
                               "', model expects '" + p.name + "'");
    if (m.shape != p.tensor.shape())
      throw ParamMismatchError("shape mismatch for parameter '" + p.name + "': checkpoint " +
                               ag::shape_str(m.shape) + ", model " +
                               ag::shape_str(p.tensor.shape()));
    if (m.offset != expected_offset)
      throw FormatError("parameter '" + m.name + "' has offset " + std::to_string(m.offset) +
                        ", expected " + std::to_string(expected_offset));
    expected_offset += 4 * p.tensor.numel();
  }
  if (reader.remaining() < expected_offset)
    throw TruncatedError("checkpoint payload holds " + std::to_string(reader.remaining()) +
                         " bytes, manifest needs " + std::to_string(expected_offset));
  if (reader.remaining() > expected_offset)
    throw CountMismatchError("checkpoint has " +
                             std::to_string(reader.remaining() - expected_offset) +
                             " trailing bytes after the payload");

  std::vector<std::vector<float>> staged;
  for (const auto& p : params) {
    std::vector<float> v(p.tensor.numel());
    for (float& x : v) x = reader.f32("parameter payload");
    staged.push_back(std::move(v));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = params[i].tensor.data();
    std::copy(staged[i].begin(), staged[i].end(), d.begin());
  }
}

struct ParsedHeader {
  json header;
  DrsnConfig config;
};

ParsedHeader read_header(binio::Reader& reader) {
  if (reader.remaining() < kMagic.size() || reader.bytes(kMagic.size(), "magic") != kMagic)
    throw BadMagicError("not a WNET checkpoint (bad magic)");
  const std::uint32_t version = reader.u32("version");
  if (version != kCheckpointVersion)
    throw VersionError("unsupported WNET version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t header_len = reader.u64("header length");
  if (header_len > reader.remaining())
    throw TruncatedError("WNET header length " + std::to_string(header_len) +
                         " exceeds file size");
  ParsedHeader out;
  try {
    out.header = json::parse(reader.bytes(static_cast<std::size_t>(header_len), "header"));
    out.config = config_from_json(out.header.at("config"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed WNET header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("WNET header has an invalid config: ") + e.what());
  }
  return out;
}

}  // namespace

json config_to_json(const DrsnConfig& c) {
  return json{{"num_classes", c.num_classes}, {"input_len", c.input_len},
              {"num_stacks", c.num_stacks},   {"channels", c.channels},
              {"rsu_kernel", c.rsu_kernel},   {"fc_hidden", c.fc_hidden},
              {"seed", c.seed}};
}

DrsnConfig config_from_json(const json& j) {
  DrsnConfig c;
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.input_len = j.at("input_len").get<std::size_t>();
  c.num_stacks = j.at("num_stacks").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.rsu_kernel = j.at("rsu_kernel").get<std::size_t>();
  c.fc_hidden = j.at("fc_hidden").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

std::string serialize_checkpoint(const DrsnModel<float>& model) {
  json params = json::array();
  std::uint64_t offset = 0;
  const auto named = model.named_parameters();
  for (const auto& p : named) {
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}});
    offset += 4 * p.tensor.numel();
  }
  const std::string header =
      json{{"config", config_to_json(model.config())}, {"params", params}}.dump();

  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(header.size());
  w.bytes(header);
  for (const auto& p : named)
    for (float v : p.tensor.data()) w.f32(v);
  return w.take();
}

DrsnModel<float> parse_checkpoint(std::string_view bytes) {
  binio::Reader reader(bytes);
  ParsedHeader h = read_header(reader);
  DrsnModel<float> model(h.config);
  std::vector<ManifestEntry> manifest;
  try {
    manifest = read_manifest(h.header);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed WNET manifest: ") + e.what());
  }
  fill_from_payload(model, manifest, reader);
  return model;
}

void save_checkpoint(const DrsnModel<float>& model, const std::filesystem::path& path) {
  binio::write_file(path, serialize_checkpoint(model));
}

DrsnModel<float> load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(binio::read_file(path));
}

void load_checkpoint_into(DrsnModel<float>& model, const std::filesystem::path& path) {
  const std::string bytes = binio::read_file(path);
  binio::Reader reader(bytes);
  ParsedHeader h = read_header(reader);
  std::vector<ManifestEntry> manifest;
  try {
    manifest = read_manifest(h.header);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed WNET manifest: ") + e.what());
  }
  fill_from_payload(model, manifest, reader);
}

}  // namespace wsr::drsn
