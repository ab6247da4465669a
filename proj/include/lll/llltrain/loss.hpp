#pragma once

#include <span>
#include <vector>

#include "lll/llltrain/model.hpp"
#include "lll/llltrain/schedule.hpp"
#include "lll/taskfmt/encode.hpp"

namespace lll::llltrain {

// The QA/LM(/ID) encodings of one underlying sample, kept together so a batch
// trains all task views of the same data.
struct EncodedItem {
  int task_id = -1;
  taskfmt::EncodedExample qa, lm;
  std::optional<taskfmt::EncodedExample> id;
};

EncodedItem encode_item(const taskfmt::Sample& s, const taskfmt::Vocab& v, int max_seq_len,
                        bool use_id_task);

// Component values of one composite loss evaluation. kl and recon are already
// weighted, so total == qa + lambda*lm + beta*id + kl + recon.
struct LossBreakdown {
  double total = 0, qa = 0, lm = 0, id = 0, kl = 0, recon = 0;
};

// L = L_QA + lambda*L_LM + beta*L_ID, each task term augmented with its
// adapter pass's reconstruction + free-bits KL when the adapter trains in
// this phase (never in backbone-only phases).
numcore::ValueRef composite_loss(numcore::Graph& g, const Model& model,
                                 std::span<const EncodedItem> batch, const LllConfig& cfg,
                                 Phase phase, numcore::Rng* noise, LossBreakdown* breakdown = nullptr);

}  // namespace lll::llltrain
