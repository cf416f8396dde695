#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mergeopt {

struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;  // row-major

  int64_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

/// A named, ordered collection of float32 tensors. Order is significant and
/// preserved bit-exactly through the MRGC container.
class TensorMap {
 public:
  TensorMap() = default;
  explicit TensorMap(std::string id) : id_(std::move(id)) {}

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  // Throws InvalidTensor on duplicate/empty names or shape-length mismatch.
  void add(const std::string& name, Tensor tensor);

  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  size_t size() const { return tensors_.size(); }

  const std::vector<std::pair<std::string, Tensor>>& tensors() const {
    return tensors_;
  }

  bool same_tensors(const TensorMap& other) const {
    return tensors_ == other.tensors_;
  }

 private:
  std::string id_;
  std::vector<std::pair<std::string, Tensor>> tensors_;
};

void write_checkpoint(const std::filesystem::path& path, const TensorMap& ckpt);
TensorMap read_checkpoint(const std::filesystem::path& path);

/// Lazy per-tensor access to an MRGC file. Parses the header once; payload
/// bytes for a tensor are read only when asked for.
class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path);

  const std::vector<std::pair<std::string, std::vector<int64_t>>>& entries() const {
    return entries_;
  }
  Tensor read_tensor(const std::string& name) const;
  TensorMap read_all() const;

 private:
  struct Record {
    std::vector<int64_t> shape;
    uint64_t offset;  // bytes from payload start
    uint64_t len;     // element count
  };
  std::filesystem::path path_;
  uint64_t payload_start_ = 0;
  std::vector<std::pair<std::string, std::vector<int64_t>>> entries_;
  std::vector<Record> records_;
};

/// One pool member: either a file on disk or an in-memory map.
struct PoolEntry {
  std::string label;
  std::variant<std::filesystem::path, std::shared_ptr<const TensorMap>> source;

  bool on_disk() const {
    return std::holds_alternative<std::filesystem::path>(source);
  }
};

struct SchemaMismatch {
  size_t entry_index;  // 1-based, matching weight indices
  std::string tensor_name;
  std::optional<std::vector<int64_t>> expected_shape;
  std::optional<std::vector<int64_t>> found_shape;
};

struct SchemaReport {
  std::vector<bool> entry_ok;
  std::optional<SchemaMismatch> first_mismatch;

  bool pass() const { return !first_mismatch.has_value(); }
};

/// Ordered candidate set. Entry i (1-based) is the checkpoint multiplied by
/// weight i in every merge over this pool.
class CheckpointPool {
 public:
  CheckpointPool() = default;

  void add_file(std::string label, std::filesystem::path path);
  void add_in_memory(std::string label, TensorMap ckpt);

  size_t size() const { return entries_.size(); }
  const std::vector<PoolEntry>& entries() const { return entries_; }
  const PoolEntry& entry(size_t index) const { return entries_.at(index); }

  // Schema of entry 1: (name, shape) in tensor order.
  std::vector<std::pair<std::string, std::vector<int64_t>>> schema() const;

  // Streams one tensor of one entry; never materializes whole files.
  Tensor read_tensor(size_t entry_index, const std::string& name) const;
  TensorMap read_entry(size_t entry_index) const;

  /// FNV-1a over labels, tensor names, shapes and raw float bytes, in pool
  /// order. Stable across on-disk and in-memory representations.
  uint64_t content_hash() const;

 private:
  std::vector<PoolEntry> entries_;
};

SchemaReport validate_pool(const CheckpointPool& pool);

/// Loads a pool directory written by save_pool: pool.json naming the ordered
/// entries plus one .mrgc file per entry.
void save_pool(const CheckpointPool& pool, const std::filesystem::path& dir);
CheckpointPool load_pool(const std::filesystem::path& dir);

}  // namespace mergeopt
