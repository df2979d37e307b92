#include <map>
#include <sstream>

#include "px3d/binary_io.hpp"
#include "px3d/network.hpp"

namespace px3d::net {

namespace {

constexpr char kMagic[4] = {'3', 'D', 'P', 'X'};
constexpr std::uint8_t kDtypeF64 = 2;

struct Header {
  std::uint64_t digest;
  NetworkConfig config;
};

Header read_header(io::ByteReader& in, const std::string& origin) {
  if (in.get_bytes(4) != std::string(kMagic, 4)) throw io::FormatError(origin + " is not a 3DPX checkpoint");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw io::FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto digest = in.get<std::uint64_t>();
  const auto json_len = in.get<std::uint32_t>();
  const auto config_text = in.get_bytes(json_len);
  NetworkConfig config;
  try {
    config = NetworkConfig::from_json(nlohmann::json::parse(config_text));
  } catch (const std::exception& e) {
    throw io::FormatError(origin + ": unreadable embedded config (" + e.what() + ")");
  }
  if (config_digest(config) != digest) {
    throw io::FormatError(origin + ": embedded config does not match its digest");
  }
  return {digest, config};
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::string describe_mismatch(const NetworkConfig& stored, const NetworkConfig& expected) {
  std::ostringstream os;
  os << "checkpoint config digest " << hex(config_digest(stored)) << " != expected "
     << hex(config_digest(expected));
  const auto a = stored.to_json();
  const auto b = expected.to_json();
  for (const auto& [key, value] : b.items()) {
    if (!a.contains(key) || a.at(key) != value) {
      os << "\n  " << key << ": checkpoint=" << (a.contains(key) ? a.at(key).dump() : "<missing>")
         << " expected=" << value.dump();
    }
  }
  return os.str();
}

}  // namespace

std::vector<char> encode_checkpoint(Network& network) {
  io::ByteWriter out;
  out.put_bytes(std::string_view(kMagic, 4));
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put<std::uint64_t>(config_digest(network.config()));
  const std::string config_text = network.config().to_json().dump();
  out.put<std::uint32_t>(static_cast<std::uint32_t>(config_text.size()));
  out.put_bytes(config_text);

  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };
  std::vector<Entry> entries;
  network.visit_params([&](const std::string& name, Tensor& t) {
    entries.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  });
  network.visit_buffers([&](const std::string& name, std::vector<double>& values) {
    entries.push_back({name, {values.size()}, values});
  });

  out.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    out.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    out.put_bytes(e.name);
    out.put<std::uint8_t>(kDtypeF64);
    out.put<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (std::size_t d : e.shape) out.put<std::uint64_t>(d);
    for (double v : e.values) out.put<double>(v);
  }
  return out.bytes();
}

void save_checkpoint(Network& network, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(network));
}

NetworkConfig read_checkpoint_config(const std::filesystem::path& path) {
  io::ByteReader in(io::read_file(path), path.string());
  return read_header(in, path.string()).config;
}

Network load_checkpoint(const std::filesystem::path& path,
                        const std::optional<NetworkConfig>& expected) {
  const std::string origin = path.string();
  io::ByteReader in(io::read_file(path), origin);
  const Header header = read_header(in, origin);
  if (expected && config_digest(*expected) != header.digest) {
    throw DigestMismatch(describe_mismatch(header.config, *expected));
  }

  std::map<std::string, std::pair<Shape, std::vector<double>>> stored;
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint16_t>();
    std::string name = in.get_bytes(name_len);
    if (in.get<std::uint8_t>() != kDtypeF64) throw io::FormatError(origin + ": unsupported dtype for " + name);
    const auto rank = in.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint64_t>();
    std::vector<double> values(numel_of(shape));
    for (auto& v : values) v = in.get<double>();
    stored.emplace(std::move(name), std::make_pair(std::move(shape), std::move(values)));
  }
  if (in.remaining() != 0) throw io::FormatError(origin + ": trailing bytes after tensor table");

  Network network = Network::create(header.config, 0);
  std::size_t used = 0;
  auto take = [&](const std::string& name, const Shape& shape) -> std::vector<double>& {
    auto it = stored.find(name);
    if (it == stored.end()) throw io::FormatError(origin + ": missing tensor " + name);
    if (it->second.first != shape) {
      throw io::FormatError(origin + ": tensor " + name + " has shape " +
                            to_string(it->second.first) + ", network expects " + to_string(shape));
    }
    ++used;
    return it->second.second;
  };
  network.visit_params([&](const std::string& name, Tensor& t) {
    const auto& values = take(name, t.shape());
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  });
  network.visit_buffers([&](const std::string& name, std::vector<double>& buffer) {
    buffer = take(name, {buffer.size()});
  });
  if (used != stored.size()) throw io::FormatError(origin + ": checkpoint has unrecognised tensors");
  return network;
}

}  // namespace px3d::net
