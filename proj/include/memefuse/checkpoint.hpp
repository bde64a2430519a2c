#pragma once

#include <iosfwd>
#include <string>

#include "memefuse/fusion.hpp"

namespace memefuse {

// Checkpoint layout: a token-oriented text document, one logical item per
// line. Floating-point numbers are written as C hexadecimal literals so a
// save/load round trip is bit-exact.
//
//   memefuse-checkpoint 1
//   strategy <token>
//   text_input_dim <n>      image_input_dim, model_dim, heads, mlp_hidden,
//   ...                     co_attention_depth likewise
//   dropout_rate <hexfloat>
//   freeze_projections <0|1>
//   late_combine <mean_prob|mean_logit|max_prob>
//   tensors <count>
//   tensor <name> trainable <0|1> rank <r> shape <d0> [<d1>]
//   values <v0> <v1> ...    (row-major, exactly size entries)
//   ...
//   end
void save_checkpoint(const FusionModel& model, std::ostream& out);
void save_checkpoint(const FusionModel& model, const std::string& path);

FusionModel load_checkpoint(std::istream& in);
FusionModel load_checkpoint(const std::string& path);

}  // namespace memefuse
