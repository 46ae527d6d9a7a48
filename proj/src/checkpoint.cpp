#include "mra/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mra {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

std::uint32_t get_u32(const std::vector<char>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw std::runtime_error("checkpoint blob truncated");
  std::uint32_t v;
  std::memcpy(&v, in.data() + pos, 4);
  pos += 4;
  return v;
}

}  // namespace

const ad::Tensor& Checkpoint::get(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw ContractError("checkpoint has no tensor named '" + std::string(name) + "'");
}

bool Checkpoint::has(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

std::vector<char> encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::vector<char> out;
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.value.rank()));
    for (int d : t.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto data = t.value.data();
    const char* p = reinterpret_cast<const char*>(data.data());
    out.insert(out.end(), p, p + data.size() * sizeof(float));
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::vector<char>& blob) {
  std::vector<NamedTensor> out;
  std::size_t pos = 0;
  while (pos < blob.size()) {
    NamedTensor t;
    std::uint32_t len = get_u32(blob, pos);
    if (pos + len > blob.size()) throw std::runtime_error("checkpoint blob truncated in name");
    t.name.assign(blob.data() + pos, len);
    pos += len;
    std::uint32_t rank = get_u32(blob, pos);
    ad::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(get_u32(blob, pos)));
    std::vector<float> data(ad::shape_size(shape));
    const std::size_t bytes = data.size() * sizeof(float);
    if (pos + bytes > blob.size()) throw std::runtime_error("checkpoint blob truncated in payload of " + t.name);
    std::memcpy(data.data(), blob.data() + pos, bytes);
    pos += bytes;
    t.value = ad::Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "mra-tensors-v1";
  manifest["records"] = nlohmann::json::array();
  for (const auto& t : ckpt.tensors) manifest["records"].push_back({{"name", t.name}, {"shape", t.value.shape()}});
  manifest["meta"] = ckpt.meta;
  {
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    f << manifest.dump(2) << '\n';
  }
  const auto blob = encode_tensors(ckpt.tensors);
  std::ofstream f(dir / "tensors.bin", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (dir / "tensors.bin").string());
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("no checkpoint manifest at " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(mf);
  std::ifstream bf(dir / "tensors.bin", std::ios::binary);
  if (!bf) throw std::runtime_error("no tensor blob at " + dir.string());
  std::vector<char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
  Checkpoint ckpt;
  ckpt.tensors = decode_tensors(blob);
  const auto& records = manifest.at("records");
  if (records.size() != ckpt.tensors.size()) throw std::runtime_error("manifest and tensor blob disagree on record count");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].at("name").get<std::string>() != ckpt.tensors[i].name)
      throw std::runtime_error("manifest record " + std::to_string(i) + " is out of order");
  }
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  return ckpt;
}

}  // namespace mra
