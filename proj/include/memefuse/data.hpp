#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "memefuse/errors.hpp"

namespace memefuse {

inline constexpr std::size_t kNumClasses = 3;

enum class Label : int { Hate = 0, Inflammatory = 1, Benign = 2 };
enum class Language : int { Bengali = 0, CodeMixed = 1, CodeSwitched = 2 };
enum class SplitTag : int { Train = 0, Val = 1, Test = 2, Unsplit = 3 };

const std::string& label_name(Label label);
const std::string& language_name(Language language);
const std::string& split_name(SplitTag tag);
Label parse_label(const std::string& token);        // DataError on unknown
Language parse_language(const std::string& token);  // DataError on unknown
std::vector<std::string> class_names();             // {Hate, Inflammatory, Benign}

// Row-major len x dim feature matrix.
struct FeatureSequence {
  std::size_t len = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * dim + j]; }
  bool operator==(const FeatureSequence&) const = default;
};

// Either inline data or a path to a feature file; exactly one is set.
struct FeatureRef {
  std::optional<FeatureSequence> data;
  std::optional<std::string> path;
  bool operator==(const FeatureRef&) const = default;
};

struct Features {
  FeatureRef text_vec;
  FeatureRef image_vec;
  bool operator==(const Features&) const = default;
};

// Exactly one of image_path / features is present on a valid record.
struct MemeRecord {
  std::string id;
  std::string text;
  Label label = Label::Benign;
  Language language = Language::Bengali;
  std::optional<std::string> image_path;
  std::optional<Features> features;
  bool operator==(const MemeRecord&) const = default;
};

struct Dataset {
  std::vector<MemeRecord> records;
  SplitTag split_tag = SplitTag::Unsplit;
  bool operator==(const Dataset&) const = default;
};

void validate_record(const MemeRecord& r);    // DataError on violation
void validate_dataset(const Dataset& d);      // record validity + unique ids

// Manifest I/O: one JSON object per line, UTF-8. Keys: id, text, label,
// language, and exactly one of image_path / features. Feature vectors are
// flat arrays (one row), nested arrays (len x dim), or file-path strings.
Dataset parse_manifest(std::istream& in);
Dataset parse_manifest_string(const std::string& text);
Dataset load_manifest(const std::string& path);
std::string serialize_manifest(const Dataset& d);
void save_manifest(const Dataset& d, const std::string& path);

struct ClassDistribution {
  std::array<std::size_t, kNumClasses> by_label{};
  std::array<std::size_t, kNumClasses> by_language{};
  std::size_t total = 0;
};

ClassDistribution class_distribution(const Dataset& d);

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Stratified by label with largest-remainder rounding (ties favor the
// earlier split). Deterministic for a fixed seed.
SplitResult split_dataset(const Dataset& d,
                          const std::array<double, 3>& ratios,
                          std::uint64_t seed);

struct SyntheticSpec {
  std::array<std::size_t, kNumClasses> samples_per_class{100, 100, 100};
  std::size_t text_dim = 16;
  std::size_t image_dim = 16;
  std::size_t text_len = 6;
  std::size_t image_len = 6;
  double joint_signal = 0.0;  // fraction where only the pair is informative
  double label_noise = 0.0;   // fraction with uniformly resampled labels
  double cue_jitter = 0.3;    // noise added on the informative row
  double distractor_sigma = 0.6;  // scale of uninformative rows
};

// Class-conditional Gaussian cue sequences; label = (text_cue + image_cue)
// mod 3 on joint-signal samples. Bitwise reproducible per (spec, seed).
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace memefuse
