#include "mergeopt/tensorstore.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "mergeopt/errors.hpp"

namespace mergeopt {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'G', 'C'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

// Floats are written as little-endian bytes regardless of host order.
// All supported hosts are little-endian; memcpy is the fast path.
void write_f32_array(std::ostream& out, const std::vector<float>& data) {
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * 4));
}

std::vector<float> read_f32_array(std::istream& in, uint64_t count) {
  std::vector<float> data(count);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(count * 4));
  return data;
}

}  // namespace

int64_t Tensor::element_count() const {
  int64_t n = 1;
  for (int64_t s : shape) n *= s;
  return n;
}

void TensorMap::add(const std::string& name, Tensor tensor) {
  if (name.empty())
    throw Error(ErrorCode::InvalidTensor, "empty tensor name");
  if (contains(name))
    throw Error(ErrorCode::InvalidTensor, "duplicate tensor name: " + name);
  for (int64_t s : tensor.shape) {
    if (s <= 0)
      throw Error(ErrorCode::InvalidTensor,
                  "non-positive dimension in tensor " + name);
  }
  if (tensor.element_count() != static_cast<int64_t>(tensor.data.size()))
    throw Error(ErrorCode::InvalidTensor,
                "data length does not match shape product in tensor " + name);
  tensors_.emplace_back(name, std::move(tensor));
}

const Tensor& TensorMap::at(const std::string& name) const {
  for (const auto& [n, t] : tensors_)
    if (n == name) return t;
  throw Error(ErrorCode::InvalidTensor, "no such tensor: " + name);
}

bool TensorMap::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const auto& p) { return p.first == name; });
}

void write_checkpoint(const std::filesystem::path& path, const TensorMap& ckpt) {
  nlohmann::ordered_json header = nlohmann::ordered_json::object();
  uint64_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors()) {
    if (tensor.element_count() != static_cast<int64_t>(tensor.data.size()))
      throw Error(ErrorCode::InvalidTensor,
                  "data length does not match shape product in tensor " + name);
    header[name] = {{"shape", tensor.shape},
                    {"offset", offset},
                    {"len", tensor.data.size()}};
    offset += tensor.data.size() * 4;  // float32 keeps 4-byte alignment
  }
  std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, header_bytes.size());
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& [name, tensor] : ckpt.tensors())
    write_f32_array(out, tensor.data);
  out.flush();
  if (!out)
    throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

CheckpointReader::CheckpointReader(const std::filesystem::path& path)
    : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open: " + path.string());
  in.seekg(0, std::ios::end);
  const uint64_t file_size = static_cast<uint64_t>(in.tellg());
  in.seekg(0);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorCode::BadMagic, "not an MRGC file: " + path.string());
  const uint32_t version = get_u32(in);
  if (version != kVersion)
    throw Error(ErrorCode::UnsupportedVersion,
                "unsupported MRGC version " + std::to_string(version));
  const uint64_t header_len = get_u64(in);
  if (!in || 16 + header_len > file_size)
    throw Error(ErrorCode::CorruptHeader, "header extends past end of file");

  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptHeader, std::string("header JSON: ") + e.what());
  }
  if (!header.is_object())
    throw Error(ErrorCode::CorruptHeader, "header is not a JSON object");

  payload_start_ = 16 + header_len;
  const uint64_t payload_size = file_size - payload_start_;
  uint64_t payload_used = 0;
  for (auto it = header.begin(); it != header.end(); ++it) {
    Record rec;
    try {
      rec.shape = it.value().at("shape").get<std::vector<int64_t>>();
      rec.offset = it.value().at("offset").get<uint64_t>();
      rec.len = it.value().at("len").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::CorruptHeader,
                  "bad record for tensor " + it.key() + ": " + e.what());
    }
    int64_t n = 1;
    for (int64_t s : rec.shape) n *= s;
    if (n < 0 || static_cast<uint64_t>(n) != rec.len)
      throw Error(ErrorCode::CorruptHeader,
                  "len does not match shape for tensor " + it.key());
    if (rec.offset % 4 != 0)
      throw Error(ErrorCode::CorruptHeader,
                  "misaligned offset for tensor " + it.key());
    if (rec.offset > payload_size || rec.offset + rec.len * 4 > payload_size) {
      // Distinguish a header pointing past EOF from a short payload.
      if (rec.offset > payload_size)
        throw Error(ErrorCode::CorruptHeader,
                    "offset past end of file for tensor " + it.key());
      throw Error(ErrorCode::TruncatedPayload,
                  "payload truncated at tensor " + it.key());
    }
    payload_used = std::max(payload_used, rec.offset + rec.len * 4);
    entries_.emplace_back(it.key(), rec.shape);
    records_.push_back(std::move(rec));
  }

  // Trailing bytes beyond the last tensor must be zero padding.
  if (payload_size > payload_used) {
    in.seekg(static_cast<std::streamoff>(payload_start_ + payload_used));
    std::vector<char> tail(payload_size - payload_used);
    in.read(tail.data(), static_cast<std::streamsize>(tail.size()));
    for (char c : tail)
      if (c != 0)
        throw Error(ErrorCode::CorruptHeader, "non-zero trailing bytes");
  }
}

Tensor CheckpointReader::read_tensor(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != name) continue;
    std::ifstream in(path_, std::ios::binary);
    if (!in)
      throw Error(ErrorCode::IoError, "cannot open: " + path_.string());
    in.seekg(static_cast<std::streamoff>(payload_start_ + records_[i].offset));
    Tensor t;
    t.shape = records_[i].shape;
    t.data = read_f32_array(in, records_[i].len);
    if (!in)
      throw Error(ErrorCode::TruncatedPayload, "payload read failed: " + name);
    return t;
  }
  throw Error(ErrorCode::InvalidTensor, "no such tensor: " + name);
}

TensorMap CheckpointReader::read_all() const {
  TensorMap out(path_.stem().string());
  for (const auto& [name, shape] : entries_)
    out.add(name, read_tensor(name));
  return out;
}

TensorMap read_checkpoint(const std::filesystem::path& path) {
  return CheckpointReader(path).read_all();
}

void CheckpointPool::add_file(std::string label, std::filesystem::path path) {
  entries_.push_back({std::move(label), std::move(path)});
}

void CheckpointPool::add_in_memory(std::string label, TensorMap ckpt) {
  entries_.push_back(
      {std::move(label), std::make_shared<const TensorMap>(std::move(ckpt))});
}

std::vector<std::pair<std::string, std::vector<int64_t>>> CheckpointPool::schema()
    const {
  if (entries_.empty())
    throw Error(ErrorCode::PoolInvalid, "empty pool");
  const PoolEntry& first = entries_.front();
  std::vector<std::pair<std::string, std::vector<int64_t>>> out;
  if (first.on_disk()) {
    CheckpointReader reader(std::get<std::filesystem::path>(first.source));
    out = reader.entries();
  } else {
    const auto& map = *std::get<std::shared_ptr<const TensorMap>>(first.source);
    for (const auto& [name, tensor] : map.tensors())
      out.emplace_back(name, tensor.shape);
  }
  return out;
}

Tensor CheckpointPool::read_tensor(size_t entry_index,
                                   const std::string& name) const {
  const PoolEntry& e = entries_.at(entry_index);
  if (e.on_disk())
    return CheckpointReader(std::get<std::filesystem::path>(e.source))
        .read_tensor(name);
  return std::get<std::shared_ptr<const TensorMap>>(e.source)->at(name);
}

TensorMap CheckpointPool::read_entry(size_t entry_index) const {
  const PoolEntry& e = entries_.at(entry_index);
  if (e.on_disk())
    return read_checkpoint(std::get<std::filesystem::path>(e.source));
  TensorMap copy = *std::get<std::shared_ptr<const TensorMap>>(e.source);
  return copy;
}

uint64_t CheckpointPool::content_hash() const {
  uint64_t h = 1469598103934665603ull;  // FNV-1a 64
  auto mix = [&h](const void* bytes, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (size_t i = 0; i < entries_.size(); ++i) {
    mix(entries_[i].label.data(), entries_[i].label.size());
    mix("\0", 1);
    TensorMap map = read_entry(i);
    for (const auto& [name, tensor] : map.tensors()) {
      mix(name.data(), name.size());
      mix("\0", 1);
      for (int64_t s : tensor.shape) mix(&s, sizeof(s));
      mix(tensor.data.data(), tensor.data.size() * 4);
    }
  }
  return h;
}

SchemaReport validate_pool(const CheckpointPool& pool) {
  if (pool.size() == 0)
    throw Error(ErrorCode::PoolInvalid, "empty pool");
  SchemaReport report;
  const auto schema = pool.schema();
  report.entry_ok.assign(pool.size(), true);

  for (size_t i = 1; i < pool.size(); ++i) {
    std::vector<std::pair<std::string, std::vector<int64_t>>> found;
    const PoolEntry& e = pool.entry(i);
    if (e.on_disk()) {
      found = CheckpointReader(std::get<std::filesystem::path>(e.source)).entries();
    } else {
      const auto& map = *std::get<std::shared_ptr<const TensorMap>>(e.source);
      for (const auto& [name, tensor] : map.tensors())
        found.emplace_back(name, tensor.shape);
    }

    auto lookup = [&found](const std::string& name)
        -> const std::vector<int64_t>* {
      for (const auto& [n, s] : found)
        if (n == name) return &s;
      return nullptr;
    };

    for (const auto& [name, shape] : schema) {
      const std::vector<int64_t>* got = lookup(name);
      if (got != nullptr && *got == shape) continue;
      report.entry_ok[i] = false;
      if (!report.first_mismatch) {
        SchemaMismatch m;
        m.entry_index = i + 1;
        m.tensor_name = name;
        m.expected_shape = shape;
        if (got != nullptr) m.found_shape = *got;
        report.first_mismatch = std::move(m);
      }
      break;
    }
    if (!report.entry_ok[i]) continue;
    // Extra tensors not in the schema also break interchangeability.
    for (const auto& [name, shape] : found) {
      bool in_schema = std::any_of(schema.begin(), schema.end(),
                                   [&](const auto& p) { return p.first == name; });
      if (in_schema) continue;
      report.entry_ok[i] = false;
      if (!report.first_mismatch) {
        SchemaMismatch m;
        m.entry_index = i + 1;
        m.tensor_name = name;
        m.found_shape = shape;
        report.first_mismatch = std::move(m);
      }
      break;
    }
  }
  return report;
}

void save_pool(const CheckpointPool& pool, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  for (size_t i = 0; i < pool.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%02zu.mrgc", i + 1);
    const std::string filename = buf;
    write_checkpoint(dir / filename, pool.read_entry(i));
    index.push_back({{"label", pool.entry(i).label}, {"file", filename}});
  }
  std::ofstream out(dir / "pool.json");
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write pool.json in " + dir.string());
  out << nlohmann::ordered_json{{"entries", index}}.dump(2) << "\n";
}

CheckpointPool load_pool(const std::filesystem::path& dir) {
  std::ifstream in(dir / "pool.json");
  if (!in)
    throw Error(ErrorCode::IoError, "cannot read pool.json in " + dir.string());
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptHeader, std::string("pool.json: ") + e.what());
  }
  CheckpointPool pool;
  for (const auto& entry : index.at("entries")) {
    pool.add_file(entry.at("label").get<std::string>(),
                  dir / entry.at("file").get<std::string>());
  }
  return pool;
}

}  // namespace mergeopt
