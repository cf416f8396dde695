#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

#include "mergeopt/errors.hpp"
#include "mergeopt/tensorstore.hpp"

using namespace mergeopt;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("mergeopt_test_" + name);
}

TensorMap sample_ckpt() {
  TensorMap ckpt("sample");
  ckpt.add("a", Tensor{{2}, {1.0f, 2.0f}});
  ckpt.add("b", Tensor{{1, 2}, {3.0f, 4.0f}});
  return ckpt;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("roundtrip is bit-exact including tensor order") {
  const fs::path path = temp_file("roundtrip.mrgc");
  const TensorMap ckpt = sample_ckpt();
  write_checkpoint(path, ckpt);
  const TensorMap back = read_checkpoint(path);
  CHECK(back.same_tensors(ckpt));
  CHECK(back.tensors()[0].first == "a");
  CHECK(back.tensors()[1].first == "b");

  // write o read is also an identity on the byte level
  const fs::path path2 = temp_file("roundtrip2.mrgc");
  write_checkpoint(path2, back);
  CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("invalid tensor is rejected before anything hits disk") {
  TensorMap ckpt;
  CHECK_THROWS_AS(ckpt.add("bad", Tensor{{3}, {1.0f, 2.0f}}), Error);
  CHECK_THROWS_AS(ckpt.add("", Tensor{{1}, {1.0f}}), Error);
  ckpt.add("x", Tensor{{1}, {1.0f}});
  CHECK_THROWS_AS(ckpt.add("x", Tensor{{1}, {2.0f}}), Error);
}

TEST_CASE("header offsets are 0 and 4*len(first) for a 2-tensor file") {
  const fs::path path = temp_file("offsets.mrgc");
  write_checkpoint(path, sample_ckpt());

  std::ifstream in(path, std::ios::binary);
  in.seekg(8);
  uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), 8);
  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  const auto header = nlohmann::json::parse(header_bytes);

  CHECK(header.at("a").at("offset").get<uint64_t>() == 0);
  CHECK(header.at("a").at("len").get<uint64_t>() == 2);
  CHECK(header.at("b").at("offset").get<uint64_t>() == 4 * 2);
}

TEST_CASE("wrong magic is BadMagic") {
  const fs::path path = temp_file("badmagic.mrgc");
  std::ofstream(path, std::ios::binary) << "NOPE" << std::string(32, '\0');
  try {
    read_checkpoint(path);
    FAIL("expected BadMagic");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadMagic);
  }
}

TEST_CASE("offset past end of file is CorruptHeader") {
  const fs::path path = temp_file("corrupt.mrgc");
  write_checkpoint(path, sample_ckpt());
  auto bytes = read_bytes(path);
  // Rebuild the file with a header offset pointing far past the payload.
  uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, 8);
  std::string header(bytes.data() + 16, header_len);
  auto j = nlohmann::json::parse(header);
  j["b"]["offset"] = 1 << 20;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), 8);
  const std::string fresh = j.dump();
  const uint64_t fresh_len = fresh.size();
  out.write(reinterpret_cast<const char*>(&fresh_len), 8);
  out.write(fresh.data(), static_cast<std::streamsize>(fresh.size()));
  out.write(bytes.data() + 16 + header_len,
            static_cast<std::streamsize>(bytes.size() - 16 - header_len));
  out.close();
  try {
    read_checkpoint(path);
    FAIL("expected CorruptHeader");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorruptHeader);
  }
}

TEST_CASE("truncated payload is TruncatedPayload") {
  const fs::path path = temp_file("truncated.mrgc");
  write_checkpoint(path, sample_ckpt());
  auto bytes = read_bytes(path);
  bytes.resize(bytes.size() - 6);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  try {
    read_checkpoint(path);
    FAIL("expected TruncatedPayload");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedPayload);
  }
}

TEST_CASE("trailing zero padding is tolerated, garbage is not") {
  const fs::path path = temp_file("padding.mrgc");
  write_checkpoint(path, sample_ckpt());
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << std::string(8, '\0');
  }
  CHECK(read_checkpoint(path).same_tensors(sample_ckpt()));
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "junk";
  }
  CHECK_THROWS_AS(read_checkpoint(path), Error);
}

TEST_CASE("lazy reader fetches single tensors") {
  const fs::path path = temp_file("lazy.mrgc");
  write_checkpoint(path, sample_ckpt());
  CheckpointReader reader(path);
  CHECK(reader.entries().size() == 2);
  const Tensor b = reader.read_tensor("b");
  CHECK(b.shape == std::vector<int64_t>{1, 2});
  CHECK(b.data == std::vector<float>{3.0f, 4.0f});
  CHECK_THROWS_AS(reader.read_tensor("missing"), Error);
}

TEST_CASE("validate_pool passes on identical schemas") {
  CheckpointPool pool;
  pool.add_in_memory("one", sample_ckpt());
  pool.add_in_memory("two", sample_ckpt());
  CHECK(validate_pool(pool).pass());
}

TEST_CASE("validate_pool names the first missing tensor") {
  CheckpointPool pool;
  pool.add_in_memory("one", sample_ckpt());
  TensorMap partial("partial");
  partial.add("a", Tensor{{2}, {0.0f, 0.0f}});
  pool.add_in_memory("two", std::move(partial));
  const SchemaReport report = validate_pool(pool);
  CHECK_FALSE(report.pass());
  CHECK(report.first_mismatch->entry_index == 2);
  CHECK(report.first_mismatch->tensor_name == "b");
  CHECK_FALSE(report.first_mismatch->found_shape.has_value());
}

TEST_CASE("validate_pool reports both shapes on mismatch") {
  CheckpointPool pool;
  TensorMap a("a");
  a.add("a", Tensor{{2}, {1.0f, 2.0f}});
  TensorMap b("b");
  b.add("a", Tensor{{2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}});
  pool.add_in_memory("one", std::move(a));
  pool.add_in_memory("two", std::move(b));
  const SchemaReport report = validate_pool(pool);
  CHECK_FALSE(report.pass());
  CHECK(report.first_mismatch->expected_shape == std::vector<int64_t>{2});
  CHECK(report.first_mismatch->found_shape == std::vector<int64_t>{2, 2});
}

TEST_CASE("pool save/load keeps order and bytes") {
  const fs::path dir = fs::temp_directory_path() / "mergeopt_test_pooldir";
  fs::remove_all(dir);
  CheckpointPool pool;
  pool.add_in_memory("first", sample_ckpt());
  TensorMap other = sample_ckpt();
  other.tensors();  // no-op, keeps other identical
  pool.add_in_memory("second", std::move(other));
  save_pool(pool, dir);
  CheckpointPool loaded = load_pool(dir);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.entry(0).label == "first");
  CHECK(loaded.read_entry(1).same_tensors(sample_ckpt()));
  CHECK(loaded.content_hash() == pool.content_hash());
}
