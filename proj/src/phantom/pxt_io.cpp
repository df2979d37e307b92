#include "px3d/pxt_io.hpp"

#include "px3d/binary_io.hpp"

namespace px3d::io {

namespace {

constexpr char kMagic[4] = {'P', 'X', 'T', '1'};
constexpr std::uint8_t kDtypeF32 = 1;

}  // namespace

std::vector<char> encode_pxt(const std::vector<NamedTensor>& entries) {
  ByteWriter header;
  header.put_bytes(std::string_view(kMagic, 4));
  header.put<std::uint32_t>(kPxtVersion);
  header.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));

  std::size_t index_size = 0;
  for (const auto& e : entries) {
    index_size += 2 + e.name.size() + 1 + 1 + 4 * e.tensor.rank() + 8 + 8;
  }
  std::uint64_t offset = header.size() + index_size;
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() > 0xFFFF) throw std::invalid_argument("pxt: invalid tensor name");
    header.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    header.put_bytes(e.name);
    header.put<std::uint8_t>(kDtypeF32);
    header.put<std::uint8_t>(static_cast<std::uint8_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) header.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    header.put<std::uint64_t>(offset);
    header.put<std::uint64_t>(e.tensor.numel());
    offset += 4 * e.tensor.numel();
  }
  ByteWriter out = header;
  for (const auto& e : entries)
    for (double v : e.tensor.data()) out.put<float>(static_cast<float>(v));
  return out.bytes();
}

std::vector<NamedTensor> decode_pxt(std::vector<char> bytes, const std::string& origin) {
  const std::size_t total = bytes.size();
  ByteReader in(std::move(bytes), origin);
  if (in.get_bytes(4) != std::string(kMagic, 4)) throw FormatError(origin + " is not a PXT1 file");
  const auto version = in.get<std::uint32_t>();
  if (version != kPxtVersion) throw FormatError(origin + ": unsupported PXT1 version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();

  struct Index {
    std::string name;
    Shape shape;
    std::uint64_t offset, count;
  };
  std::vector<Index> index;
  for (std::uint32_t i = 0; i < count; ++i) {
    Index e;
    e.name = in.get_bytes(in.get<std::uint16_t>());
    if (in.get<std::uint8_t>() != kDtypeF32) throw FormatError(origin + ": unsupported dtype for " + e.name);
    e.shape.resize(in.get<std::uint8_t>());
    for (auto& d : e.shape) d = in.get<std::uint32_t>();
    e.offset = in.get<std::uint64_t>();
    e.count = in.get<std::uint64_t>();
    if (e.count != numel_of(e.shape)) throw FormatError(origin + ": element count mismatch for " + e.name);
    index.push_back(std::move(e));
  }
  std::uint64_t expected = in.position();
  std::vector<NamedTensor> out;
  for (const auto& e : index) {
    if (e.offset != expected || e.offset + 4 * e.count > total) {
      throw FormatError(origin + ": payload of " + e.name + " is out of place");
    }
    std::vector<double> values(e.count);
    for (auto& v : values) v = in.get<float>();
    expected += 4 * e.count;
    out.push_back({e.name, Tensor::from(e.shape, std::move(values))});
  }
  if (in.remaining() != 0) throw FormatError(origin + ": trailing bytes");
  return out;
}

void write_pxt(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
  write_file_atomic(path, encode_pxt(entries));
}

std::vector<NamedTensor> read_pxt(const std::filesystem::path& path) {
  return decode_pxt(read_file(path), path.string());
}

const Tensor& find_tensor(const std::vector<NamedTensor>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return e.tensor;
  throw FormatError("pxt: no tensor named '" + name + "'");
}

Tensor round_to_f32(const Tensor& t) {
  std::vector<double> values(t.data().begin(), t.data().end());
  for (auto& v : values) v = static_cast<float>(v);
  return Tensor::from(t.shape(), std::move(values));
}

}  // namespace px3d::io
