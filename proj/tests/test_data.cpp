#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "memefuse/data.hpp"
#include "memefuse/rng.hpp"

using namespace memefuse;

namespace {

MemeRecord image_record(const std::string& id, Label label, Language lang) {
  MemeRecord r;
  r.id = id;
  r.text = "caption for " + id;
  r.label = label;
  r.language = lang;
  r.image_path = "images/" + id + ".grid";
  return r;
}

Dataset table_like_dataset(const std::array<std::size_t, 3>& by_label,
                           const std::array<std::size_t, 3>& by_language) {
  Dataset d;
  std::size_t total = 0;
  for (std::size_t n : by_label) total += n;
  std::size_t lang_check = 0;
  for (std::size_t n : by_language) lang_check += n;
  REQUIRE(total == lang_check);
  std::size_t label_cursor = 0, label_used = 0;
  std::size_t lang_cursor = 0, lang_used = 0;
  for (std::size_t i = 0; i < total; ++i) {
    while (label_used == by_label[label_cursor]) {
      ++label_cursor;
      label_used = 0;
    }
    while (lang_used == by_language[lang_cursor]) {
      ++lang_cursor;
      lang_used = 0;
    }
    char id[16];
    std::snprintf(id, sizeof(id), "r%05zu", i);
    d.records.push_back(image_record(id, static_cast<Label>(label_cursor),
                                     static_cast<Language>(lang_cursor)));
    ++label_used;
    ++lang_used;
  }
  return d;
}

std::array<std::size_t, 3> split_class_counts(const Dataset& d) {
  std::array<std::size_t, 3> counts{};
  for (const MemeRecord& r : d.records) ++counts[static_cast<int>(r.label)];
  return counts;
}

}  // namespace

TEST_CASE("label and language tokens round-trip; unknown tokens rejected") {
  for (int i = 0; i < 3; ++i) {
    const Label l = static_cast<Label>(i);
    CHECK(parse_label(label_name(l)) == l);
    const Language g = static_cast<Language>(i);
    CHECK(parse_language(language_name(g)) == g);
  }
  CHECK(label_name(Label::Hate) == "Hate");
  CHECK(language_name(Language::CodeMixed) == "code-mixed");
  CHECK(class_names() ==
        std::vector<std::string>{"Hate", "Inflammatory", "Benign"});

  CHECK_THROWS_WITH_AS(parse_label("hateful"),
                       doctest::Contains("{Hate, Inflammatory, Benign}"),
                       DataError);
  CHECK_THROWS_WITH_AS(parse_language("english"),
                       doctest::Contains("{bengali, code-mixed, code-switched}"),
                       DataError);
}

TEST_CASE("parse_manifest: three valid lines") {
  const std::string text =
      R"({"id":"a","text":"one","label":"Hate","language":"bengali","image_path":"a.grid"})"
      "\n"
      R"({"id":"b","text":"two","label":"Inflammatory","language":"code-mixed","features":{"text_vec":[1.0,2.0],"image_vec":[[1.0],[2.0],[3.0]]}})"
      "\n\n"
      R"({"id":"c","text":"three","label":"Benign","language":"code-switched","features":{"text_vec":"feats/c.txt","image_vec":[0.5]}})"
      "\n";
  Dataset d = parse_manifest_string(text);
  REQUIRE(d.records.size() == 3);
  CHECK(d.split_tag == SplitTag::Unsplit);
  CHECK(d.records[0].image_path == "a.grid");
  CHECK_FALSE(d.records[0].features.has_value());

  const Features& fb = *d.records[1].features;
  REQUIRE(fb.text_vec.data.has_value());
  CHECK(fb.text_vec.data->len == 1);  // flat array means a single row
  CHECK(fb.text_vec.data->dim == 2);
  CHECK(fb.image_vec.data->len == 3);
  CHECK(fb.image_vec.data->dim == 1);
  CHECK(fb.image_vec.data->at(2, 0) == 3.0);

  const Features& fc = *d.records[2].features;
  CHECK(fc.text_vec.path == "feats/c.txt");
  CHECK_FALSE(fc.text_vec.data.has_value());
}

TEST_CASE("parse_manifest: errors carry line numbers and field names") {
  const std::string base =
      R"({"id":"a","text":"t","label":"Hate","language":"bengali","image_path":"a.grid"})"
      "\n";

  CHECK_THROWS_WITH_AS(
      parse_manifest_string(base + "{not json}\n"),
      doctest::Contains("line 2"), DataError);
  CHECK_THROWS_WITH_AS(
      parse_manifest_string(
          base +
          R"({"id":"b","text":"t","label":"hateful","language":"bengali","image_path":"b.grid"})"
          "\n"),
      doctest::Contains("allowed {Hate, Inflammatory, Benign}"), DataError);
  CHECK_THROWS_WITH_AS(
      parse_manifest_string(base + base),
      doctest::Contains("duplicate id"), DataError);
  CHECK_THROWS_WITH_AS(
      parse_manifest_string(
          R"({"id":"a","text":"t","label":"Hate","language":"bengali"})" "\n"),
      doctest::Contains("image_path"), DataError);
  CHECK_THROWS_WITH_AS(
      parse_manifest_string(
          R"({"id":"a","text":"t","label":"Hate","language":"bengali","image_path":"x","features":{"text_vec":[1],"image_vec":[1]}})"
          "\n"),
      doctest::Contains("exactly one"), DataError);
  CHECK_THROWS_WITH_AS(
      parse_manifest_string(
          R"({"id":"a","label":"Hate","language":"bengali","image_path":"x"})"
          "\n"),
      doctest::Contains("\"text\""), DataError);
  CHECK_THROWS_WITH_AS(
      parse_manifest_string(
          R"({"id":"a","text":"t","label":"Hate","language":"bengali","features":{"text_vec":[[1,2],[3]],"image_vec":[1]}})"
          "\n"),
      doctest::Contains("share one length"), DataError);
  CHECK_THROWS_WITH_AS(
      parse_manifest_string(
          R"({"id":"a","text":"t","label":"Hate","language":"bengali","features":{"text_vec":[1]}})"
          "\n"),
      doctest::Contains("image_vec"), DataError);
}

TEST_CASE("serialize then parse is the identity") {
  Dataset d;
  d.records.push_back(image_record("img-1", Label::Hate, Language::Bengali));
  MemeRecord feat;
  feat.id = "feat-1";
  feat.text = "unicode বাংলা text";
  feat.label = Label::Inflammatory;
  feat.language = Language::CodeSwitched;
  Features f;
  f.text_vec.data = FeatureSequence{2, 3, {0.1, -0.25, 1e-17, 3.5, 4.0, -5.5}};
  f.image_vec.path = "feats/feat-1.txt";
  feat.features = f;
  d.records.push_back(feat);

  const std::string bytes = serialize_manifest(d);
  Dataset back = parse_manifest_string(bytes);
  CHECK(back == d);

  // Synthetic data survives the round trip bit-for-bit.
  SyntheticSpec spec;
  spec.samples_per_class = {5, 5, 5};
  Dataset syn = generate_synthetic(spec, 11);
  CHECK(parse_manifest_string(serialize_manifest(syn)) == syn);
}

TEST_CASE("class_distribution: frozen table counts and partition property") {
  CHECK(class_distribution(Dataset{}).total == 0);
  CHECK(class_distribution(Dataset{}).by_label ==
        std::array<std::size_t, 3>{0, 0, 0});

  // Test-split shaped manifest.
  Dataset test_like = table_like_dataset({173, 167, 148}, {258, 120, 110});
  ClassDistribution cd = class_distribution(test_like);
  CHECK(cd.by_label == std::array<std::size_t, 3>{173, 167, 148});
  CHECK(cd.total == 488);

  // Train-split shaped manifest with the language breakdown.
  Dataset train_like = table_like_dataset({811, 773, 688}, {1190, 750, 332});
  ClassDistribution td = class_distribution(train_like);
  CHECK(td.by_label == std::array<std::size_t, 3>{811, 773, 688});
  CHECK(td.by_language == std::array<std::size_t, 3>{1190, 750, 332});
  CHECK(td.total == 2272);

  std::size_t by_label_sum = 0, by_lang_sum = 0;
  for (int i = 0; i < 3; ++i) {
    by_label_sum += td.by_label[i];
    by_lang_sum += td.by_language[i];
  }
  CHECK(by_label_sum == td.total);
  CHECK(by_lang_sum == td.total);
}

TEST_CASE("split_dataset: exact splits for round class sizes") {
  Dataset d = table_like_dataset({100, 100, 100}, {100, 100, 100});
  SplitResult s = split_dataset(d, {0.7, 0.15, 0.15}, 42);
  CHECK(split_class_counts(s.train) == std::array<std::size_t, 3>{70, 70, 70});
  CHECK(split_class_counts(s.val) == std::array<std::size_t, 3>{15, 15, 15});
  CHECK(split_class_counts(s.test) == std::array<std::size_t, 3>{15, 15, 15});
  CHECK(s.train.split_tag == SplitTag::Train);
  CHECK(s.val.split_tag == SplitTag::Val);
  CHECK(s.test.split_tag == SplitTag::Test);
}

TEST_CASE("split_dataset: reproduces the reference split within one record") {
  Dataset d = table_like_dataset({1158, 1106, 983}, {1700, 1000, 547});
  SplitResult s = split_dataset(d, {0.7, 0.15, 0.15}, 42);
  const auto train = split_class_counts(s.train);
  const auto val = split_class_counts(s.val);
  const auto test = split_class_counts(s.test);

  // Frozen largest-remainder arithmetic for these class sizes.
  CHECK(train == std::array<std::size_t, 3>{810, 774, 688});
  CHECK(val == std::array<std::size_t, 3>{174, 166, 148});
  CHECK(test == std::array<std::size_t, 3>{174, 166, 147});

  // Within one record of the reference table per class per split.
  const std::array<std::size_t, 3> ref_train{811, 773, 688};
  const std::array<std::size_t, 3> ref_val{174, 166, 147};
  const std::array<std::size_t, 3> ref_test{173, 167, 148};
  for (int c = 0; c < 3; ++c) {
    CHECK(std::llabs(static_cast<long long>(train[c]) -
                     static_cast<long long>(ref_train[c])) <= 1);
    CHECK(std::llabs(static_cast<long long>(val[c]) -
                     static_cast<long long>(ref_val[c])) <= 1);
    CHECK(std::llabs(static_cast<long long>(test[c]) -
                     static_cast<long long>(ref_test[c])) <= 1);
  }

  // Spec property: each split within 1 of ratio * class count.
  const std::array<std::size_t, 3> class_totals{1158, 1106, 983};
  const std::array<double, 3> ratios{0.7, 0.15, 0.15};
  for (int c = 0; c < 3; ++c) {
    const std::array<std::size_t, 3> got{train[c], val[c], test[c]};
    for (int sp = 0; sp < 3; ++sp) {
      CHECK(std::fabs(static_cast<double>(got[sp]) -
                      ratios[sp] * static_cast<double>(class_totals[c])) <=
            1.0);
    }
    CHECK(train[c] + val[c] + test[c] == class_totals[c]);
  }
}

TEST_CASE("split_dataset: disjoint union and determinism") {
  Dataset d = table_like_dataset({40, 35, 25}, {40, 30, 30});
  SplitResult a = split_dataset(d, {0.7, 0.15, 0.15}, 7);
  SplitResult b = split_dataset(d, {0.7, 0.15, 0.15}, 7);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);

  SplitResult c = split_dataset(d, {0.7, 0.15, 0.15}, 8);
  CHECK(c.train.records != a.train.records);

  std::set<std::string> ids;
  for (const Dataset* part : {&a.train, &a.val, &a.test}) {
    for (const MemeRecord& r : part->records) {
      CHECK(ids.insert(r.id).second);  // no overlap between splits
    }
  }
  CHECK(ids.size() == d.records.size());
  for (const MemeRecord& r : d.records) CHECK(ids.count(r.id) == 1);
}

TEST_CASE("split_dataset: contract and data errors") {
  Dataset d = table_like_dataset({10, 10, 10}, {10, 10, 10});
  CHECK_THROWS_AS(split_dataset(d, {0.7, 0.2, 0.2}, 1), ContractError);

  Dataset tagged = d;
  tagged.split_tag = SplitTag::Train;
  CHECK_THROWS_AS(split_dataset(tagged, {0.7, 0.15, 0.15}, 1), ContractError);

  Dataset missing = table_like_dataset({10, 0, 10}, {10, 5, 5});
  CHECK_THROWS_AS(split_dataset(missing, {0.7, 0.15, 0.15}, 1), DataError);
}

TEST_CASE("generate_synthetic: reproducible, shaped, and class-exact") {
  SyntheticSpec spec;
  spec.samples_per_class = {20, 30, 10};
  spec.text_dim = 8;
  spec.image_dim = 5;
  spec.text_len = 4;
  spec.image_len = 3;
  spec.joint_signal = 0.4;

  Dataset a = generate_synthetic(spec, 123);
  Dataset b = generate_synthetic(spec, 123);
  CHECK(a == b);
  Dataset c = generate_synthetic(spec, 124);
  CHECK(a.records != c.records);

  REQUIRE(a.records.size() == 60);
  CHECK(class_distribution(a).by_label ==
        std::array<std::size_t, 3>{20, 30, 10});
  std::set<std::string> ids;
  for (const MemeRecord& r : a.records) {
    CHECK(ids.insert(r.id).second);
    REQUIRE(r.features.has_value());
    CHECK(r.features->text_vec.data->len == 4);
    CHECK(r.features->text_vec.data->dim == 8);
    CHECK(r.features->image_vec.data->len == 3);
    CHECK(r.features->image_vec.data->dim == 5);
    CHECK_FALSE(r.text.empty());
  }
  validate_dataset(a);
}

TEST_CASE("generate_synthetic: cue construction is auditable with zero noise") {
  SyntheticSpec spec;
  spec.samples_per_class = {60, 60, 60};
  spec.cue_jitter = 0.0;
  spec.distractor_sigma = 0.0;

  auto cue_symbol = [](const FeatureSequence& s) {
    // With zero noise only the cue row is nonzero.
    std::size_t cue_row = s.len;
    for (std::size_t i = 0; i < s.len; ++i) {
      double norm2 = 0.0;
      for (std::size_t j = 0; j < s.dim; ++j) norm2 += s.at(i, j) * s.at(i, j);
      if (norm2 > 0.0) {
        CHECK(cue_row == s.len);  // exactly one informative row
        cue_row = i;
      }
    }
    REQUIRE(cue_row < s.len);
    return cue_row;
  };

  SUBCASE("easy samples: both modalities encode 2y mod 3") {
    spec.joint_signal = 0.0;
    Dataset d = generate_synthetic(spec, 5);
    // Collect the distinct cue vectors per class; one per class per modality.
    std::map<int, std::vector<double>> text_cue_by_class;
    for (const MemeRecord& r : d.records) {
      const FeatureSequence& t = *r.features->text_vec.data;
      const std::size_t row = cue_symbol(t);
      std::vector<double> cue(t.values.begin() + row * t.dim,
                              t.values.begin() + (row + 1) * t.dim);
      auto [it, inserted] =
          text_cue_by_class.emplace(static_cast<int>(r.label), cue);
      if (!inserted) CHECK(it->second == cue);
      cue_symbol(*r.features->image_vec.data);
    }
    CHECK(text_cue_by_class.size() == 3);
  }

  SUBCASE("joint samples: text symbol is mixed across each class") {
    spec.joint_signal = 1.0;
    Dataset d = generate_synthetic(spec, 5);
    std::set<std::vector<double>> class0_text_cues;
    for (const MemeRecord& r : d.records) {
      if (r.label != Label::Hate) continue;
      const FeatureSequence& t = *r.features->text_vec.data;
      const std::size_t row = cue_symbol(t);
      class0_text_cues.insert(std::vector<double>(
          t.values.begin() + row * t.dim, t.values.begin() + (row + 1) * t.dim));
    }
    // A single class sees all three text cue vectors under joint signal.
    CHECK(class0_text_cues.size() == 3);
  }
}

TEST_CASE("generate_synthetic: full label noise breaks the class counts") {
  SyntheticSpec spec;
  spec.samples_per_class = {200, 200, 200};
  spec.label_noise = 1.0;
  Dataset d = generate_synthetic(spec, 9);
  const ClassDistribution cd = class_distribution(d);
  CHECK(cd.total == 600);
  for (int c = 0; c < 3; ++c) {
    CHECK(cd.by_label[c] > 140);
    CHECK(cd.by_label[c] < 260);
  }
}

TEST_CASE("generate_synthetic: contract checks") {
  SyntheticSpec spec;
  spec.joint_signal = 0.8;
  spec.label_noise = 0.3;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), ContractError);
  spec.label_noise = 0.0;
  spec.joint_signal = -0.1;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), ContractError);
  spec.joint_signal = 0.0;
  spec.samples_per_class = {0, 1, 1};
  CHECK_THROWS_AS(generate_synthetic(spec, 1), ContractError);
  spec.samples_per_class = {1, 1, 1};
  spec.text_len = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), ContractError);
}
