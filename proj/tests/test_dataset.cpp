#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "px3d/binary_io.hpp"
#include "px3d/dataset.hpp"
#include "px3d/pxt_io.hpp"
#include "test_util.hpp"

using namespace px3d;
using namespace px3d::data;
using px3d::testing::TempDir;
namespace fs = std::filesystem;

namespace {

DatasetSpec small_spec(std::size_t subjects = 10, std::uint64_t seed = 4) {
  DatasetSpec s;
  s.subjects = subjects;
  s.seed = seed;
  s.phantom = {60, 60, 55, 2.0};
  return s;
}

std::map<std::string, std::vector<char>> tree_bytes(const fs::path& root) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return out;
}

}  // namespace

TEST(Splits, SubjectCounts) {
  EXPECT_EQ(split_subject_counts(10, {0.7, 0.15, 0.15}), (std::array<std::size_t, 3>{7, 1, 2}));
  EXPECT_EQ(split_subject_counts(20, {0.7, 0.15, 0.15}), (std::array<std::size_t, 3>{14, 3, 3}));
  EXPECT_EQ(split_subject_counts(1, {0.7, 0.15, 0.15}), (std::array<std::size_t, 3>{0, 0, 1}));
  EXPECT_EQ(split_subject_counts(4, {1.0, 0.0, 0.0}), (std::array<std::size_t, 3>{4, 0, 0}));
}

TEST(DatasetSpec, ValidationAndJson) {
  DatasetSpec s = small_spec();
  EXPECT_NO_THROW(s.validate());
  const DatasetSpec back = DatasetSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  s.subjects = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec();
  s.split_fractions = {0.5, 0.2, 0.2};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec();
  s.classes.push_back({0.0, 20.0});
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_EQ(default_angle_classes().size(), 5u);
  EXPECT_EQ(default_angle_classes()[0].lateral_deg, -10.0);
  EXPECT_EQ(default_angle_classes()[4].lateral_deg, 10.0);
}

TEST(Dataset, BuildsDisjointSplitsWithConsistentPairs) {
  TempDir dir("ds");
  const Manifest m = build_dataset(small_spec(), dir / "data");
  EXPECT_FALSE(fs::exists(dir / "data.partial"));
  EXPECT_EQ(m.split_subjects[0].size(), 7u);
  EXPECT_EQ(m.split_subjects[1].size(), 1u);
  EXPECT_EQ(m.split_subjects[2].size(), 2u);
  EXPECT_EQ(m.split("train").size(), 35u);
  EXPECT_EQ(m.split("val").size(), 5u);
  EXPECT_EQ(m.split("test").size(), 10u);
  EXPECT_THROW(m.split("holdout"), std::invalid_argument);

  std::set<std::size_t> seen;
  for (const auto& subjects : m.split_subjects) {
    for (std::size_t s : subjects) EXPECT_TRUE(seen.insert(s).second) << "subject " << s << " in two splits";
  }
  EXPECT_EQ(seen.size(), 10u);

  const Manifest loaded = load_manifest(dir / "data");
  EXPECT_EQ(loaded.to_json(), m.to_json());
  for (const auto& meta : loaded.samples) {
    const auto& home = loaded.split_subjects[static_cast<std::size_t>(
        std::find(kSplitNames.begin(), kSplitNames.end(), meta.split) - kSplitNames.begin())];
    EXPECT_NE(std::find(home.begin(), home.end(), meta.subject), home.end()) << meta.id;

    const SamplePair pair = load_sample(dir / "data", meta);
    ASSERT_EQ(pair.px.shape(), (Shape{1, 32, 64}));
    ASSERT_EQ(pair.flattened.shape(), (Shape{16, 32, 64}));
    const Tensor expected = io::round_to_f32(phantom::px_project(pair.flattened));
    for (std::size_t i = 0; i < expected.numel(); ++i) ASSERT_EQ(pair.px.data()[i], expected.data()[i]) << meta.id;
    for (double v : pair.flattened.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    EXPECT_EQ(pair.rotation, loaded.spec.classes[static_cast<std::size_t>(meta.misalignment_class)]);
  }
}

TEST(Dataset, StoredSampleMatchesInMemoryGeneration) {
  TempDir dir("ds");
  const DatasetSpec spec = small_spec(2, 9);
  const Manifest m = build_dataset(spec, dir / "data");
  const SampleMeta& meta = m.samples.back();
  const SamplePair stored = load_sample(dir / "data", meta);
  const SamplePair fresh = make_sample(spec, make_subject(spec, meta.subject), meta.subject,
                                       static_cast<std::size_t>(meta.misalignment_class));
  EXPECT_EQ(fresh.sample_id, meta.id);
  for (std::size_t i = 0; i < fresh.flattened.numel(); ++i) {
    ASSERT_EQ(stored.flattened.data()[i], fresh.flattened.data()[i]);
  }
  const Tensor px32 = io::round_to_f32(fresh.px);
  for (std::size_t i = 0; i < px32.numel(); ++i) ASSERT_EQ(stored.px.data()[i], px32.data()[i]);
}

TEST(Dataset, RebuildWithSameSeedIsByteIdentical) {
  TempDir dir("ds");
  const DatasetSpec spec = small_spec(3, 11);
  build_dataset(spec, dir / "a");
  build_dataset(spec, dir / "b");
  const auto a = tree_bytes(dir / "a");
  EXPECT_EQ(a.size(), 16u);
  EXPECT_EQ(a, tree_bytes(dir / "b"));
  build_dataset(small_spec(3, 12), dir / "c");
  EXPECT_NE(a, tree_bytes(dir / "c"));
}

TEST(Dataset, ExistingOutputNeedsForce) {
  TempDir dir("ds");
  const DatasetSpec spec = small_spec(1, 1);
  fs::create_directories(dir / "data");
  io::write_file_atomic(dir / "data" / "keep.txt", std::string("x"));
  EXPECT_THROW(build_dataset(spec, dir / "data"), std::runtime_error);
  EXPECT_TRUE(fs::exists(dir / "data" / "keep.txt"));

  fs::create_directories(dir / "data.partial" / "stale");
  build_dataset(spec, dir / "data", true);
  EXPECT_FALSE(fs::exists(dir / "data" / "keep.txt"));
  EXPECT_FALSE(fs::exists(dir / "data.partial"));
  EXPECT_TRUE(fs::exists(dir / "data" / "manifest.json"));
}

TEST(Dataset, InvalidSpecLeavesNothingBehind) {
  TempDir dir("ds");
  DatasetSpec spec = small_spec(1, 1);
  spec.reformat.out_width = 0;
  EXPECT_THROW(build_dataset(spec, dir / "data"), std::invalid_argument);
  EXPECT_FALSE(fs::exists(dir / "data"));
  EXPECT_FALSE(fs::exists(dir / "data.partial"));
}

TEST(Pxt, RoundTripAtSinglePrecision) {
  Rng rng(1);
  const Tensor a = px3d::testing::random_tensor({2, 3, 4}, rng);
  const Tensor b = px3d::testing::random_tensor({5}, rng);
  const auto decoded = io::decode_pxt(io::encode_pxt({{"a", a}, {"b", b}}));
  ASSERT_EQ(decoded.size(), 2u);
  EXPECT_EQ(decoded[0].name, "a");
  EXPECT_EQ(decoded[0].tensor.shape(), a.shape());
  const Tensor a32 = io::round_to_f32(a);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_EQ(decoded[0].tensor.data()[i], a32.data()[i]);
    EXPECT_EQ(static_cast<double>(static_cast<float>(a.data()[i])), a32.data()[i]);
  }
  EXPECT_EQ(io::find_tensor(decoded, "b").shape(), (Shape{5}));
  EXPECT_THROW(io::find_tensor(decoded, "c"), io::FormatError);
}

TEST(Pxt, CorruptContainersAreRejected) {
  Rng rng(2);
  const auto bytes = io::encode_pxt({{"x", px3d::testing::random_tensor({3, 3}, rng)}});
  auto bad_magic = bytes;
  bad_magic[1] ^= 0x55;
  EXPECT_THROW(io::decode_pxt(bad_magic), io::FormatError);
  EXPECT_THROW(io::decode_pxt(std::vector<char>(bytes.begin(), bytes.end() - 4)), io::FormatError);
  auto trailing = bytes;
  trailing.push_back('\0');
  EXPECT_THROW(io::decode_pxt(trailing), io::FormatError);
  EXPECT_THROW(io::decode_pxt({}), io::FormatError);
}
