#include "px3d/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "px3d/binary_io.hpp"
#include "px3d/pxt_io.hpp"
#include "px3d/random.hpp"

namespace px3d::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSplitStream = 0x5350'4C49'5400ULL;

json phantom_spec_json(const phantom::PhantomSpec& s) {
  return {{"nx", s.nx}, {"ny", s.ny}, {"nz", s.nz}, {"voxel_size", s.voxel_size}};
}

json reformat_spec_json(const phantom::ReformatSpec& s) {
  return {{"depth_range_mm", s.depth_range_mm}, {"depth_step_mm", s.depth_step_mm},
          {"height_mm", s.height_mm},           {"out_depth", s.out_depth},
          {"out_height", s.out_height},         {"out_width", s.out_width}};
}

}  // namespace

std::vector<AngleClass> default_angle_classes() {
  return {{0.0, -10.0}, {0.0, -5.0}, {0.0, 0.0}, {0.0, 5.0}, {0.0, 10.0}};
}

void DatasetSpec::validate() const {
  if (subjects == 0) throw std::invalid_argument("dataset: subjects must be at least 1");
  if (classes.empty()) throw std::invalid_argument("dataset: at least one angle class is required");
  for (const auto& c : classes) {
    if (std::abs(c.vertical_deg) > phantom::kMaxRotationDeg || std::abs(c.lateral_deg) > phantom::kMaxRotationDeg) {
      throw std::invalid_argument("dataset: angle class exceeds +/-15 degrees");
    }
  }
  double sum = 0.0;
  for (double f : split_fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("dataset: split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("dataset: split fractions must sum to 1");
  reformat.validate();
}

json DatasetSpec::to_json() const {
  json cls = json::array();
  for (const auto& c : classes) cls.push_back({{"vertical_deg", c.vertical_deg}, {"lateral_deg", c.lateral_deg}});
  return {{"subjects", subjects},
          {"seed", seed},
          {"phantom", phantom_spec_json(phantom)},
          {"reformat", reformat_spec_json(reformat)},
          {"classes", cls},
          {"split_fractions", split_fractions}};
}

DatasetSpec DatasetSpec::from_json(const json& j) {
  DatasetSpec s;
  s.subjects = j.at("subjects").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto& p = j.at("phantom");
  s.phantom = {p.at("nx").get<std::size_t>(), p.at("ny").get<std::size_t>(), p.at("nz").get<std::size_t>(),
               p.at("voxel_size").get<double>()};
  const auto& r = j.at("reformat");
  s.reformat.depth_range_mm = r.at("depth_range_mm").get<double>();
  s.reformat.depth_step_mm = r.at("depth_step_mm").get<double>();
  s.reformat.height_mm = r.at("height_mm").get<double>();
  s.reformat.out_depth = r.at("out_depth").get<std::size_t>();
  s.reformat.out_height = r.at("out_height").get<std::size_t>();
  s.reformat.out_width = r.at("out_width").get<std::size_t>();
  s.classes.clear();
  for (const auto& c : j.at("classes")) {
    s.classes.push_back({c.at("vertical_deg").get<double>(), c.at("lateral_deg").get<double>()});
  }
  s.split_fractions = j.at("split_fractions").get<std::array<double, 3>>();
  return s;
}

std::array<std::size_t, 3> split_subject_counts(std::size_t subjects, const std::array<double, 3>& fractions) {
  const auto part = [&](double f) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(subjects) * f + 1e-9));
  };
  const std::size_t train = std::min(part(fractions[0]), subjects);
  const std::size_t val = std::min(part(fractions[1]), subjects - train);
  return {train, val, subjects - train - val};
}

std::string sample_id(std::size_t subject, std::size_t class_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%04zu_c%zu", subject, class_index);
  return buf;
}

phantom::Phantom make_subject(const DatasetSpec& spec, std::size_t subject) {
  return phantom::generate_phantom(derive_seed(spec.seed, subject), spec.phantom);
}

SamplePair make_sample(const DatasetSpec& spec, const phantom::Phantom& subject_phantom, std::size_t subject,
                       std::size_t class_index) {
  const AngleClass& rotation = spec.classes.at(class_index);
  const phantom::Volume3D rotated =
      phantom::rotate_volume(subject_phantom.volume, rotation.vertical_deg, rotation.lateral_deg);
  const Tensor flattened = io::round_to_f32(phantom::curved_planar_reformat(rotated, subject_phantom.arch, spec.reformat));
  SamplePair pair;
  pair.px = phantom::px_project(flattened);
  pair.flattened = flattened;
  pair.misalignment_class = static_cast<int>(class_index);
  pair.rotation = rotation;
  pair.sample_id = sample_id(subject, class_index);
  return pair;
}

json Manifest::to_json() const {
  json splits = json::object();
  for (std::size_t i = 0; i < 3; ++i) splits[kSplitNames[i]] = split_subjects[i];
  json rows = json::array();
  for (const auto& s : samples) {
    rows.push_back({{"id", s.id},
                    {"subject", s.subject},
                    {"split", s.split},
                    {"misalignment_class", s.misalignment_class},
                    {"rotation", {{"vertical_deg", s.rotation.vertical_deg}, {"lateral_deg", s.rotation.lateral_deg}}},
                    {"file", s.file}});
  }
  return {{"format", "pxt-dataset"}, {"version", 1}, {"seed", spec.seed},
          {"spec", spec.to_json()},  {"splits", splits}, {"samples", rows}};
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  if (j.value("format", "") != "pxt-dataset") throw io::FormatError("manifest: unrecognised format");
  m.spec = DatasetSpec::from_json(j.at("spec"));
  for (std::size_t i = 0; i < 3; ++i) {
    m.split_subjects[i] = j.at("splits").at(kSplitNames[i]).get<std::vector<std::size_t>>();
  }
  for (const auto& r : j.at("samples")) {
    SampleMeta s;
    s.id = r.at("id").get<std::string>();
    s.subject = r.at("subject").get<std::size_t>();
    s.split = r.at("split").get<std::string>();
    s.misalignment_class = r.at("misalignment_class").get<int>();
    s.rotation = {r.at("rotation").at("vertical_deg").get<double>(), r.at("rotation").at("lateral_deg").get<double>()};
    s.file = r.at("file").get<std::string>();
    m.samples.push_back(std::move(s));
  }
  return m;
}

std::vector<SampleMeta> Manifest::split(const std::string& name) const {
  if (std::find(kSplitNames.begin(), kSplitNames.end(), name) == kSplitNames.end()) {
    throw std::invalid_argument("unknown split '" + name + "' (expected train, val or test)");
  }
  std::vector<SampleMeta> out;
  for (const auto& s : samples)
    if (s.split == name) out.push_back(s);
  return out;
}

Manifest build_dataset(const DatasetSpec& spec, const fs::path& out, bool force) {
  spec.validate();
  if (fs::exists(out) && !force) {
    throw std::runtime_error("output " + out.string() + " already exists (use --force to replace it)");
  }

  Manifest manifest;
  manifest.spec = spec;
  std::vector<std::size_t> order(spec.subjects);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(spec.seed, kSplitStream));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  const auto counts = split_subject_counts(spec.subjects, spec.split_fractions);
  std::vector<std::string> split_of(spec.subjects);
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<std::size_t> members(order.begin() + cursor, order.begin() + cursor + counts[s]);
    std::sort(members.begin(), members.end());
    for (std::size_t subject : members) split_of[subject] = kSplitNames[s];
    manifest.split_subjects[s] = std::move(members);
    cursor += counts[s];
  }

  fs::path partial = out;
  partial += ".partial";
  fs::remove_all(partial);
  try {
    fs::create_directories(partial / "samples");
    for (std::size_t subject = 0; subject < spec.subjects; ++subject) {
      const phantom::Phantom ph = make_subject(spec, subject);
      for (std::size_t c = 0; c < spec.classes.size(); ++c) {
        const SamplePair pair = make_sample(spec, ph, subject, c);
        const std::string file = "samples/" + pair.sample_id + ".pxt";
        io::write_pxt(partial / file, {{"px", pair.px}, {"flattened", pair.flattened}});
        manifest.samples.push_back(
            {pair.sample_id, subject, split_of[subject], pair.misalignment_class, pair.rotation, file});
      }
    }
    io::write_file_atomic(partial / "manifest.json", manifest.to_json().dump(2) + "\n");
    fs::remove_all(out);
    fs::rename(partial, out);
  } catch (...) {
    std::error_code ignored;
    fs::remove_all(partial, ignored);
    throw;
  }
  return manifest;
}

Manifest load_manifest(const fs::path& dir) {
  const auto bytes = io::read_file(dir / "manifest.json");
  try {
    return Manifest::from_json(json::parse(bytes.begin(), bytes.end()));
  } catch (const json::exception& e) {
    throw io::FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
}

SamplePair load_sample(const fs::path& dir, const SampleMeta& meta) {
  const auto entries = io::read_pxt(dir / meta.file);
  SamplePair pair;
  pair.px = io::find_tensor(entries, "px");
  pair.flattened = io::find_tensor(entries, "flattened");
  pair.misalignment_class = meta.misalignment_class;
  pair.rotation = meta.rotation;
  pair.sample_id = meta.id;
  return pair;
}

}  // namespace px3d::data
