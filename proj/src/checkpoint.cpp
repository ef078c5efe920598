#include "wdsm/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "wdsm/errors.hpp"

namespace wdsm {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "WDSM1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void append_le(std::vector<std::uint8_t>& out, const std::vector<T>& values) {
  const auto start = out.size();
  out.resize(start + values.size() * sizeof(T));
  std::memcpy(out.data() + start, values.data(), values.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      auto* p = out.data() + start + i * sizeof(T);
      std::reverse(p, p + sizeof(T));
    }
  }
}

template <typename T>
std::vector<T> read_le(const std::uint8_t* p, std::size_t count) {
  std::vector<T> values(count);
  std::memcpy(values.data(), p, count * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* bytes = reinterpret_cast<std::uint8_t*>(values.data());
    for (std::size_t i = 0; i < count; ++i) std::reverse(bytes + i * sizeof(T), bytes + (i + 1) * sizeof(T));
  }
  return values;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> payload;
  json index = json::array();
  for (const auto& t : checkpoint.tensors) {
    const auto offset = payload.size();
    std::string dtype;
    std::size_t count = 0;
    std::visit(
        [&](const auto& v) {
          using V = typename std::decay_t<decltype(v)>::value_type;
          dtype = std::is_same_v<V, float> ? "f32" : "f64";
          count = v.size();
          append_le(payload, v);
        },
        t.values);
    if (count != shape_numel(t.shape)) throw ShapeError("checkpoint tensor " + t.name + ": shape/value mismatch");
    index.push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", dtype}, {"offset", offset}});
  }
  const json meta = {{"version", kCheckpointVersion},
                     {"config", to_json(checkpoint.model)},
                     {"train", checkpoint.train},
                     {"tensors", std::move(index)},
                     {"payload_bytes", payload.size()}};
  const std::string header = std::string(kMagic) + meta.dump() + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FormatError("bad magic: not a WDSM1 checkpoint");
  }
  const auto* begin = bytes.data() + kMagicLen;
  const auto* end = bytes.data() + bytes.size();
  const auto* newline = std::find(begin, end, std::uint8_t{'\n'});
  if (newline == end) throw FormatError("truncated header: metadata line is not terminated");

  json meta;
  try {
    meta = json::parse(begin, newline);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("corrupt metadata: ") + e.what());
  }
  if (!meta.is_object() || !meta.contains("version")) throw FormatError("corrupt metadata: missing version");
  if (meta["version"] != kCheckpointVersion) {
    throw FormatError("unknown version " + meta["version"].dump());
  }

  Checkpoint ck;
  const auto* payload = newline + 1;
  const auto available = static_cast<std::size_t>(end - payload);
  try {
    ck.model = model_config_from_json(meta.at("config"));
    ck.train = meta.value("train", json::object());
    const auto payload_bytes = meta.at("payload_bytes").get<std::size_t>();
    if (available < payload_bytes) {
      throw FormatError("truncated payload: expected " + std::to_string(payload_bytes) + " bytes, found " +
                        std::to_string(available));
    }
    if (available > payload_bytes) throw FormatError("trailing bytes after payload");
    for (const auto& entry : meta.at("tensors")) {
      NamedArray t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      const auto dtype = entry.at("dtype").get<std::string>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = shape_numel(t.shape);
      const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
      if (width == 0) throw FormatError("tensor " + t.name + ": unknown dtype " + dtype);
      if (offset > payload_bytes || count * width > payload_bytes - offset) {
        throw FormatError("truncated payload: tensor " + t.name + " extends past the payload");
      }
      if (width == 4) {
        t.values = read_le<float>(payload + offset, count);
      } else {
        t.values = read_le<double>(payload + offset, count);
      }
      ck.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt metadata: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
Checkpoint make_checkpoint(const ModelConfig& model, const ParamList<T>& params, json train) {
  check_params(model, params);
  Checkpoint ck;
  ck.model = model;
  ck.train = std::move(train);
  for (const auto& p : params) {
    const auto v = p.value.data();
    ck.tensors.push_back({p.name, p.value.shape(), std::vector<T>(v.begin(), v.end())});
  }
  return ck;
}

template <typename T>
ParamList<T> params_from_checkpoint(const Checkpoint& checkpoint, bool requires_grad) {
  ParamList<T> params;
  for (const auto& t : checkpoint.tensors) {
    std::vector<T> values = std::visit(
        [](const auto& v) { return std::vector<T>(v.begin(), v.end()); }, t.values);
    params.push_back({t.name, Tensor<T>(t.shape, std::move(values), requires_grad)});
  }
  check_params(checkpoint.model, params);
  return params;
}

template Checkpoint make_checkpoint<float>(const ModelConfig&, const ParamList<float>&, json);
template Checkpoint make_checkpoint<double>(const ModelConfig&, const ParamList<double>&, json);
template ParamList<float> params_from_checkpoint<float>(const Checkpoint&, bool);
template ParamList<double> params_from_checkpoint<double>(const Checkpoint&, bool);

}  // namespace wdsm
