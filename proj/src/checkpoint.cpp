#include "memefuse/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>

#include "memefuse/errors.hpp"

namespace memefuse {

namespace {

constexpr const char* kMagic = "memefuse-checkpoint";
constexpr int kVersion = 1;

std::string hex_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

std::string late_combine_token(LateCombine mode) {
  switch (mode) {
    case LateCombine::MeanProb:
      return "mean_prob";
    case LateCombine::MeanLogit:
      return "mean_logit";
    case LateCombine::MaxProb:
      return "max_prob";
  }
  throw ContractError("checkpoint: unknown late_combine mode");
}

LateCombine parse_late_combine(const std::string& token) {
  if (token == "mean_prob") return LateCombine::MeanProb;
  if (token == "mean_logit") return LateCombine::MeanLogit;
  if (token == "max_prob") return LateCombine::MaxProb;
  throw DataError("checkpoint: unknown late_combine token '" + token + "'");
}

// Token reader with enough state for useful error messages.
class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string word(const char* what) {
    std::string t;
    if (!(in_ >> t)) {
      throw DataError(std::string("checkpoint: unexpected end of file, "
                                  "expected ") +
                      what);
    }
    return t;
  }

  void expect(const char* literal) {
    const std::string t = word(literal);
    if (t != literal) {
      throw DataError(std::string("checkpoint: expected '") + literal +
                      "', found '" + t + "'");
    }
  }

  std::size_t count(const char* what) {
    const std::string t = word(what);
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(t, &pos);
      if (pos != t.size()) throw std::invalid_argument(t);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw DataError(std::string("checkpoint: malformed count for ") + what +
                      ": '" + t + "'");
    }
  }

  double real(const char* what) {
    const std::string t = word(what);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) {
      throw DataError(std::string("checkpoint: malformed number for ") + what +
                      ": '" + t + "'");
    }
    return v;
  }

  bool flag(const char* what) {
    const std::string t = word(what);
    if (t == "0") return false;
    if (t == "1") return true;
    throw DataError(std::string("checkpoint: expected 0 or 1 for ") + what +
                    ", found '" + t + "'");
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const FusionModel& model, std::ostream& out) {
  const ModelConfig& cfg = model.config();
  out << kMagic << ' ' << kVersion << '\n';
  out << "strategy " << strategy_name(cfg.strategy) << '\n';
  out << "text_input_dim " << cfg.text_input_dim << '\n';
  out << "image_input_dim " << cfg.image_input_dim << '\n';
  out << "model_dim " << cfg.model_dim << '\n';
  out << "heads " << cfg.heads << '\n';
  out << "mlp_hidden " << cfg.mlp_hidden << '\n';
  out << "dropout_rate " << hex_double(cfg.dropout_rate) << '\n';
  out << "co_attention_depth " << cfg.co_attention_depth << '\n';
  out << "freeze_projections " << (cfg.freeze_projections ? 1 : 0) << '\n';
  out << "late_combine " << late_combine_token(cfg.late_combine) << '\n';
  out << "tensors " << model.named_tensors().size() << '\n';
  for (const auto& [name, tensor] : model.named_tensors()) {
    out << "tensor " << name << " trainable "
        << (model.params().contains(name) ? 1 : 0) << " rank " << tensor.rank()
        << " shape";
    for (std::size_t dim : tensor.shape()) out << ' ' << dim;
    out << '\n' << "values";
    for (double v : tensor.values()) out << ' ' << hex_double(v);
    out << '\n';
  }
  out << "end\n";
  if (!out) throw DataError("checkpoint: write failed");
}

void save_checkpoint(const FusionModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
  save_checkpoint(model, out);
}

FusionModel load_checkpoint(std::istream& in) {
  TokenReader r(in);
  r.expect(kMagic);
  const std::size_t version = r.count("format version");
  if (version != static_cast<std::size_t>(kVersion)) {
    throw DataError("checkpoint: unsupported format version " +
                    std::to_string(version));
  }

  ModelConfig cfg;
  r.expect("strategy");
  const std::string strategy_token = r.word("strategy token");
  try {
    cfg.strategy = parse_strategy(strategy_token);
  } catch (const ContractError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  r.expect("text_input_dim");
  cfg.text_input_dim = r.count("text_input_dim");
  r.expect("image_input_dim");
  cfg.image_input_dim = r.count("image_input_dim");
  r.expect("model_dim");
  cfg.model_dim = r.count("model_dim");
  r.expect("heads");
  cfg.heads = r.count("heads");
  r.expect("mlp_hidden");
  cfg.mlp_hidden = r.count("mlp_hidden");
  r.expect("dropout_rate");
  cfg.dropout_rate = r.real("dropout_rate");
  r.expect("co_attention_depth");
  cfg.co_attention_depth = r.count("co_attention_depth");
  r.expect("freeze_projections");
  cfg.freeze_projections = r.flag("freeze_projections");
  r.expect("late_combine");
  cfg.late_combine = parse_late_combine(r.word("late_combine token"));

  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw DataError(std::string("checkpoint: invalid configuration: ") +
                    e.what());
  }

  Rng scratch_rng(0);
  FusionModel model(cfg, scratch_rng);

  r.expect("tensors");
  const std::size_t tensor_count = r.count("tensor count");
  if (tensor_count != model.named_tensors().size()) {
    throw DataError("checkpoint: tensor count " +
                    std::to_string(tensor_count) + " does not match the " +
                    std::to_string(model.named_tensors().size()) +
                    " tensors of a " + strategy_token + " model");
  }

  std::set<std::string> seen;
  for (std::size_t t = 0; t < tensor_count; ++t) {
    r.expect("tensor");
    const std::string name = r.word("tensor name");
    Tensor target;
    try {
      target = model.tensor_named(name);
    } catch (const ContractError&) {
      throw DataError("checkpoint: model has no tensor named " + name);
    }
    if (!seen.insert(name).second) {
      throw DataError("checkpoint: duplicate tensor " + name);
    }

    r.expect("trainable");
    const bool trainable = r.flag("trainable flag");
    if (trainable != model.params().contains(name)) {
      throw DataError("checkpoint: trainable flag mismatch for " + name);
    }
    r.expect("rank");
    const std::size_t rank = r.count("rank");
    if (rank != target.rank()) {
      throw DataError("checkpoint: rank mismatch for " + name);
    }
    r.expect("shape");
    for (std::size_t d = 0; d < rank; ++d) {
      const std::size_t dim = r.count("shape entry");
      if (dim != target.shape()[d]) {
        throw DataError("checkpoint: shape mismatch for " + name);
      }
    }
    r.expect("values");
    auto out = target.raw_values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = r.real("tensor value");
    }
  }
  r.expect("end");
  return model;
}

FusionModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  return load_checkpoint(in);
}

}  // namespace memefuse
