#include "memefuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "memefuse/rng.hpp"

namespace memefuse {

namespace {

const std::array<std::string, 3> kLabelNames{"Hate", "Inflammatory", "Benign"};
const std::array<std::string, 3> kLanguageNames{"bengali", "code-mixed",
                                                "code-switched"};
const std::array<std::string, 4> kSplitNames{"train", "val", "test",
                                             "unsplit"};

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
  throw DataError("manifest line " + std::to_string(line) + ": " + what);
}

}  // namespace

const std::string& label_name(Label label) {
  return kLabelNames[static_cast<int>(label)];
}

const std::string& language_name(Language language) {
  return kLanguageNames[static_cast<int>(language)];
}

const std::string& split_name(SplitTag tag) {
  return kSplitNames[static_cast<int>(tag)];
}

Label parse_label(const std::string& token) {
  for (int i = 0; i < 3; ++i) {
    if (token == kLabelNames[i]) return static_cast<Label>(i);
  }
  throw DataError("unknown label \"" + token +
                  "\": allowed {Hate, Inflammatory, Benign}");
}

Language parse_language(const std::string& token) {
  for (int i = 0; i < 3; ++i) {
    if (token == kLanguageNames[i]) return static_cast<Language>(i);
  }
  throw DataError("unknown language \"" + token +
                  "\": allowed {bengali, code-mixed, code-switched}");
}

std::vector<std::string> class_names() {
  return {kLabelNames.begin(), kLabelNames.end()};
}

namespace {

void validate_feature_ref(const FeatureRef& ref, const char* field) {
  const bool has_data = ref.data.has_value();
  const bool has_path = ref.path.has_value();
  if (has_data == has_path) {
    throw DataError(std::string(field) +
                    ": exactly one of inline data or path required");
  }
  if (has_data) {
    const FeatureSequence& s = *ref.data;
    if (s.len == 0 || s.dim == 0 || s.values.size() != s.len * s.dim) {
      throw DataError(std::string(field) + ": inconsistent feature shape");
    }
    for (double v : s.values) {
      if (!std::isfinite(v)) {
        throw DataError(std::string(field) + ": non-finite feature value");
      }
    }
  } else if (ref.path->empty()) {
    throw DataError(std::string(field) + ": empty feature path");
  }
}

}  // namespace

void validate_record(const MemeRecord& r) {
  if (r.id.empty()) throw DataError("record id must be non-empty");
  const int label = static_cast<int>(r.label);
  const int lang = static_cast<int>(r.language);
  if (label < 0 || label > 2) throw DataError("label out of range");
  if (lang < 0 || lang > 2) throw DataError("language out of range");
  if (r.image_path.has_value() == r.features.has_value()) {
    throw DataError("record " + r.id +
                    ": exactly one of image_path or features required");
  }
  if (r.image_path && r.image_path->empty()) {
    throw DataError("record " + r.id + ": empty image_path");
  }
  if (r.features) {
    validate_feature_ref(r.features->text_vec, "text_vec");
    validate_feature_ref(r.features->image_vec, "image_vec");
  }
}

void validate_dataset(const Dataset& d) {
  std::set<std::string> seen;
  for (const MemeRecord& r : d.records) {
    validate_record(r);
    if (!seen.insert(r.id).second) {
      throw DataError("duplicate id \"" + r.id + "\"");
    }
  }
}

namespace {

using json = nlohmann::ordered_json;

FeatureRef parse_feature_ref(const json& v, std::size_t line,
                             const char* field) {
  FeatureRef out;
  if (v.is_string()) {
    out.path = v.get<std::string>();
    return out;
  }
  if (!v.is_array() || v.empty()) {
    line_error(line, std::string(field) +
                         " must be a non-empty array or a path string");
  }
  FeatureSequence seq;
  if (v.front().is_array()) {
    seq.len = v.size();
    seq.dim = v.front().size();
    for (const json& row : v) {
      if (!row.is_array() || row.size() != seq.dim) {
        line_error(line, std::string(field) + " rows must share one length");
      }
      for (const json& x : row) {
        if (!x.is_number()) {
          line_error(line, std::string(field) + " entries must be numbers");
        }
        seq.values.push_back(x.get<double>());
      }
    }
  } else {
    seq.len = 1;
    seq.dim = v.size();
    for (const json& x : v) {
      if (!x.is_number()) {
        line_error(line, std::string(field) + " entries must be numbers");
      }
      seq.values.push_back(x.get<double>());
    }
  }
  if (seq.dim == 0) line_error(line, std::string(field) + " has empty rows");
  out.data = std::move(seq);
  return out;
}

std::string require_string(const json& obj, const char* key,
                           std::size_t line) {
  if (!obj.contains(key) || !obj.at(key).is_string()) {
    line_error(line, std::string("missing or non-string field \"") + key +
                         "\"");
  }
  return obj.at(key).get<std::string>();
}

MemeRecord parse_record_line(const std::string& text, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    line_error(line, std::string("invalid record: ") + e.what());
  }
  if (!obj.is_object()) line_error(line, "record must be an object");

  MemeRecord r;
  r.id = require_string(obj, "id", line);
  if (r.id.empty()) line_error(line, "field \"id\" must be non-empty");
  r.text = require_string(obj, "text", line);
  try {
    r.label = parse_label(require_string(obj, "label", line));
    r.language = parse_language(require_string(obj, "language", line));
  } catch (const DataError& e) {
    line_error(line, e.what());
  }

  const bool has_image = obj.contains("image_path");
  const bool has_features = obj.contains("features");
  if (has_image == has_features) {
    line_error(line, "exactly one of \"image_path\" or \"features\" required");
  }
  if (has_image) {
    r.image_path = require_string(obj, "image_path", line);
    if (r.image_path->empty()) line_error(line, "empty \"image_path\"");
  } else {
    const json& f = obj.at("features");
    if (!f.is_object() || !f.contains("text_vec") ||
        !f.contains("image_vec")) {
      line_error(line,
                 "\"features\" must hold \"text_vec\" and \"image_vec\"");
    }
    Features feats;
    feats.text_vec = parse_feature_ref(f.at("text_vec"), line, "text_vec");
    feats.image_vec = parse_feature_ref(f.at("image_vec"), line, "image_vec");
    r.features = std::move(feats);
  }
  try {
    validate_record(r);
  } catch (const DataError& e) {
    line_error(line, e.what());
  }
  return r;
}

json feature_ref_to_json(const FeatureRef& ref) {
  if (ref.path) return json(*ref.path);
  const FeatureSequence& s = *ref.data;
  json rows = json::array();
  for (std::size_t i = 0; i < s.len; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < s.dim; ++j) row.push_back(s.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Dataset parse_manifest(std::istream& in) {
  Dataset out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    MemeRecord r = parse_record_line(line, line_no);
    if (!seen.insert(r.id).second) {
      line_error(line_no, "duplicate id \"" + r.id + "\"");
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

Dataset parse_manifest_string(const std::string& text) {
  std::istringstream in(text);
  return parse_manifest(in);
}

Dataset load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest \"" + path + "\"");
  return parse_manifest(in);
}

std::string serialize_manifest(const Dataset& d) {
  validate_dataset(d);
  std::string out;
  for (const MemeRecord& r : d.records) {
    json obj;
    obj["id"] = r.id;
    obj["text"] = r.text;
    obj["label"] = label_name(r.label);
    obj["language"] = language_name(r.language);
    if (r.image_path) {
      obj["image_path"] = *r.image_path;
    } else {
      json f;
      f["text_vec"] = feature_ref_to_json(r.features->text_vec);
      f["image_vec"] = feature_ref_to_json(r.features->image_vec);
      obj["features"] = std::move(f);
    }
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_manifest(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest \"" + path + "\"");
  out << serialize_manifest(d);
  if (!out) throw DataError("failed writing manifest \"" + path + "\"");
}

ClassDistribution class_distribution(const Dataset& d) {
  ClassDistribution out;
  for (const MemeRecord& r : d.records) {
    ++out.by_label[static_cast<int>(r.label)];
    ++out.by_language[static_cast<int>(r.language)];
    ++out.total;
  }
  return out;
}

SplitResult split_dataset(const Dataset& d,
                          const std::array<double, 3>& ratios,
                          std::uint64_t seed) {
  double ratio_sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw ContractError("split_dataset: ratios must be non-negative");
    }
    ratio_sum += r;
  }
  if (std::fabs(ratio_sum - 1.0) > 1e-9) {
    throw ContractError("split_dataset: ratios must sum to 1");
  }
  if (d.split_tag != SplitTag::Unsplit) {
    throw ContractError("split_dataset: dataset already carries a split tag");
  }
  validate_dataset(d);

  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    by_class[static_cast<int>(d.records[i].label)].push_back(i);
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (by_class[c].empty()) {
      throw DataError("split_dataset: class \"" +
                      label_name(static_cast<Label>(c)) + "\" has no records");
    }
  }

  Rng root(seed);
  std::array<std::vector<std::size_t>, 3> chosen;  // original indices per split
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t>& members = by_class[c];
    Rng class_rng = root.fork("split-class-" + std::to_string(c));
    class_rng.shuffle(members);

    const double n = static_cast<double>(members.size());
    std::array<std::size_t, 3> take{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double ideal = ratios[s] * n;
      take[s] = static_cast<std::size_t>(std::floor(ideal));
      frac[s] = ideal - std::floor(ideal);
      assigned += take[s];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&frac](int a, int b) {
      if (frac[a] != frac[b]) return frac[a] > frac[b];
      return a < b;  // tie favors the earlier split
    });
    for (std::size_t r = 0; assigned < members.size(); ++r, ++assigned) {
      ++take[order[r % 3]];
    }

    std::size_t cursor = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t i = 0; i < take[s]; ++i) {
        chosen[s].push_back(members[cursor++]);
      }
    }
  }

  SplitResult out;
  Dataset* dest[3] = {&out.train, &out.val, &out.test};
  for (int s = 0; s < 3; ++s) {
    std::sort(chosen[s].begin(), chosen[s].end());
    dest[s]->split_tag = static_cast<SplitTag>(s);
    dest[s]->records.reserve(chosen[s].size());
    for (std::size_t i : chosen[s]) dest[s]->records.push_back(d.records[i]);
  }
  return out;
}

namespace {

std::vector<double> draw_cue_center(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double scale = std::sqrt(static_cast<double>(dim)) /
                       std::sqrt(norm2 + 1e-30);
  for (double& x : v) x *= scale;
  return v;
}

FeatureSequence draw_sequence(std::size_t len, std::size_t dim,
                              const std::vector<double>& center,
                              double cue_jitter, double distractor_sigma,
                              Rng& rng) {
  FeatureSequence seq;
  seq.len = len;
  seq.dim = dim;
  seq.values.resize(len * dim);
  const std::size_t cue_row = rng.uniform_index(len);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      seq.values[i * dim + j] =
          i == cue_row ? center[j] + cue_jitter * rng.normal()
                       : distractor_sigma * rng.normal();
    }
  }
  return seq;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  for (std::size_t n : spec.samples_per_class) {
    if (n == 0) throw ContractError("generate_synthetic: empty class");
  }
  if (spec.text_dim == 0 || spec.image_dim == 0 || spec.text_len == 0 ||
      spec.image_len == 0) {
    throw ContractError("generate_synthetic: dims and lengths must be positive");
  }
  if (spec.joint_signal < 0.0 || spec.joint_signal > 1.0 ||
      spec.label_noise < 0.0 || spec.label_noise > 1.0 ||
      spec.joint_signal + spec.label_noise > 1.0) {
    throw ContractError(
        "generate_synthetic: need joint_signal, label_noise in [0,1] with "
        "sum <= 1");
  }
  if (!(spec.cue_jitter >= 0.0) || !(spec.distractor_sigma >= 0.0)) {
    throw ContractError("generate_synthetic: noise scales must be >= 0");
  }

  Rng root(seed);
  Rng cue_rng = root.fork("cue-centers");
  std::array<std::vector<double>, 3> text_centers, image_centers;
  for (int s = 0; s < 3; ++s) {
    text_centers[s] = draw_cue_center(spec.text_dim, cue_rng);
  }
  for (int s = 0; s < 3; ++s) {
    image_centers[s] = draw_cue_center(spec.image_dim, cue_rng);
  }

  Rng sample_rng = root.fork("samples");
  Rng lang_rng = root.fork("languages");

  Dataset out;
  std::size_t counter = 0;
  for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
    for (std::size_t i = 0; i < spec.samples_per_class[c]; ++i) {
      int label = c;
      const double u = sample_rng.uniform();
      int text_sym, image_sym;
      bool resample = false;
      if (u < spec.joint_signal) {
        // Only the pair identifies the class: each marginal is uniform.
        text_sym = static_cast<int>(sample_rng.uniform_index(3));
        image_sym = ((label - text_sym) % 3 + 3) % 3;
      } else {
        // Both cues alone identify the class; 2c keeps (t + i) mod 3 == c.
        text_sym = (2 * c) % 3;
        image_sym = text_sym;
        resample = u < spec.joint_signal + spec.label_noise;
      }

      Features feats;
      feats.text_vec.data = draw_sequence(
          spec.text_len, spec.text_dim, text_centers[text_sym],
          spec.cue_jitter, spec.distractor_sigma, sample_rng);
      feats.image_vec.data = draw_sequence(
          spec.image_len, spec.image_dim, image_centers[image_sym],
          spec.cue_jitter, spec.distractor_sigma, sample_rng);
      if (resample) label = static_cast<int>(sample_rng.uniform_index(3));

      MemeRecord r;
      char id[32];
      std::snprintf(id, sizeof(id), "syn-%06zu", counter++);
      r.id = id;
      r.text = "synthetic caption " + r.id;
      r.label = static_cast<Label>(label);
      r.language = static_cast<Language>(lang_rng.uniform_index(3));
      r.features = std::move(feats);
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace memefuse
