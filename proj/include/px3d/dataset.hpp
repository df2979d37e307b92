#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "px3d/phantom.hpp"
#include "px3d/tensor.hpp"

namespace px3d::data {

struct AngleClass {
  double vertical_deg = 0.0;
  double lateral_deg = 0.0;

  bool operator==(const AngleClass&) const = default;
};

/// Lateral turns of -10, -5, 0, +5, +10 degrees (classes 0..4).
std::vector<AngleClass> default_angle_classes();

inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

struct DatasetSpec {
  std::size_t subjects = 10;
  std::uint64_t seed = 0;
  phantom::PhantomSpec phantom;
  phantom::ReformatSpec reformat;
  std::vector<AngleClass> classes = default_angle_classes();
  std::array<double, 3> split_fractions{0.7, 0.15, 0.15};

  void validate() const;
  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

/// Subjects per split: floor(n f_train), floor(n f_val), remainder to test.
std::array<std::size_t, 3> split_subject_counts(std::size_t subjects, const std::array<double, 3>& fractions);

struct SamplePair {
  Tensor px;         // [1, H, W] in [0, 1]
  Tensor flattened;  // [D, H, W] in [0, 1]
  int misalignment_class = 0;
  AngleClass rotation;
  std::string sample_id;
};

std::string sample_id(std::size_t subject, std::size_t class_index);

/// Pure function of (spec, subject, class). The flattened volume is rounded to
/// single precision and px is projected from the rounded values, so a stored
/// pair reloads consistently.
SamplePair make_sample(const DatasetSpec& spec, const phantom::Phantom& subject_phantom,
                       std::size_t subject, std::size_t class_index);
phantom::Phantom make_subject(const DatasetSpec& spec, std::size_t subject);

struct SampleMeta {
  std::string id;
  std::size_t subject = 0;
  std::string split;
  int misalignment_class = 0;
  AngleClass rotation;
  std::string file;  // relative to the dataset directory
};

struct Manifest {
  DatasetSpec spec;
  std::array<std::vector<std::size_t>, 3> split_subjects;
  std::vector<SampleMeta> samples;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);

  std::vector<SampleMeta> split(const std::string& name) const;
};

/// Writes manifest.json and samples/<id>.pxt. The tree is assembled in a
/// sibling "<out>.partial" directory and renamed into place; a failure removes
/// the partial tree. An existing `out` is replaced only when `force` is set.
Manifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& out, bool force = false);

Manifest load_manifest(const std::filesystem::path& dir);
SamplePair load_sample(const std::filesystem::path& dir, const SampleMeta& meta);

}  // namespace px3d::data
