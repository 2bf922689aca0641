#include "introdistill/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace introdistill {

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

using nlohmann::json;

json spec_to_json(const NetworkSpec& spec) {
  return json{{"kind", arch_name(spec.kind)},
              {"hidden", spec.hidden},
              {"input_shape", spec.input_shape},
              {"classes", spec.classes}};
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec spec;
  spec.kind = arch_from_name(j.at("kind").get<std::string>());
  spec.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  spec.input_shape = j.at("input_shape").get<Shape>();
  spec.classes = j.at("classes").get<std::size_t>();
  return spec;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const Network& net, const Provenance& prov,
                     const std::string& path) {
  json header;
  header["spec"] = spec_to_json(net.spec());
  header["provenance"] = {{"method", prov.method},
                          {"epoch", prov.epoch},
                          {"metrics", prov.metrics}};

  std::ostringstream body;
  body << "INTRODISTILL-CKPT " << kCheckpointVersion << "\n";
  body << header.dump() << "\n";

  std::size_t count = 0;
  for (const NdArray& p : net.params()) count += p.numel();
  body << "BLOB " << count << "\n";
  for (const NdArray& p : net.params()) {
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const float f = static_cast<float>(p[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      const unsigned char bytes[4] = {
          static_cast<unsigned char>(bits & 0xff),
          static_cast<unsigned char>((bits >> 8) & 0xff),
          static_cast<unsigned char>((bits >> 16) & 0xff),
          static_cast<unsigned char>((bits >> 24) & 0xff)};
      body.write(reinterpret_cast<const char*>(bytes), 4);
    }
  }
  const std::string payload = body.str();
  const std::uint64_t digest = fnv1a64(
      reinterpret_cast<const unsigned char*>(payload.data()), payload.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << payload << "\nDIGEST " << hex64(digest) << "\n";
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string raw = buf.str();

  // Split off the digest trailer first so the payload hash covers the rest.
  const std::string marker = "\nDIGEST ";
  const std::size_t mpos = raw.rfind(marker);
  if (mpos == std::string::npos) {
    throw std::runtime_error("checkpoint: missing digest trailer in " + path);
  }
  const std::string payload = raw.substr(0, mpos);
  std::string digest_hex = raw.substr(mpos + marker.size());
  while (!digest_hex.empty() &&
         (digest_hex.back() == '\n' || digest_hex.back() == '\r')) {
    digest_hex.pop_back();
  }

  std::istringstream ps(payload);
  std::string tag;
  std::size_t version = 0;
  ps >> tag >> version;
  if (tag != "INTRODISTILL-CKPT") {
    throw std::runtime_error("checkpoint: bad file tag in " + path);
  }
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unknown version " +
                             std::to_string(version) + " in " + path);
  }
  ps.ignore(1);  // newline
  std::string header_line;
  std::getline(ps, header_line);
  nlohmann::json header = nlohmann::json::parse(header_line);

  std::string blob_tag;
  std::size_t count = 0;
  ps >> blob_tag >> count;
  if (blob_tag != "BLOB") {
    throw std::runtime_error("checkpoint: missing blob section in " + path);
  }
  ps.ignore(1);

  NetworkSpec spec = spec_from_json(header.at("spec"));
  // Rebuild parameter tensors with a throwaway init to recover shapes.
  Network shaped = Network::init(spec, 0);
  if (shaped.param_count() != count) {
    throw std::runtime_error(
        "checkpoint: blob size disagrees with the spec (" +
        std::to_string(count) + " stored, " +
        std::to_string(shaped.param_count()) + " expected)");
  }

  const std::size_t blob_start = static_cast<std::size_t>(ps.tellg());
  if (payload.size() - blob_start < count * 4) {
    throw std::runtime_error("checkpoint: truncated parameter blob in " + path);
  }

  const std::uint64_t digest = fnv1a64(
      reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
  if (hex64(digest) != digest_hex) {
    throw std::runtime_error("checkpoint: digest mismatch in " + path);
  }

  const unsigned char* bytes =
      reinterpret_cast<const unsigned char*>(payload.data()) + blob_start;
  std::vector<NdArray> params;
  std::size_t off = 0;
  for (const NdArray& proto : shaped.params()) {
    std::vector<double> values(proto.numel());
    for (std::size_t i = 0; i < proto.numel(); ++i) {
      std::uint32_t bits = std::uint32_t(bytes[off]) |
                           (std::uint32_t(bytes[off + 1]) << 8) |
                           (std::uint32_t(bytes[off + 2]) << 16) |
                           (std::uint32_t(bytes[off + 3]) << 24);
      off += 4;
      float f;
      std::memcpy(&f, &bits, 4);
      values[i] = static_cast<double>(f);
    }
    params.emplace_back(proto.shape(), std::move(values));
  }

  LoadedCheckpoint loaded{Network(spec, std::move(params)), Provenance{}};
  const nlohmann::json& pj = header.at("provenance");
  loaded.prov.method = pj.at("method").get<std::string>();
  loaded.prov.epoch = pj.at("epoch").get<std::size_t>();
  loaded.prov.metrics =
      pj.at("metrics").get<std::map<std::string, double>>();
  return loaded;
}

}  // namespace introdistill
