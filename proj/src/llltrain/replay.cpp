#include "lll/llltrain/replay.hpp"

#include <stdexcept>

namespace lll::llltrain {

std::optional<double> ReplayTaskPlan::correspondence_rate() const {
  if (samples.empty()) return std::nullopt;
  return static_cast<double>(kept_corresponding) / static_cast<double>(samples.size());
}

std::size_t ReplayPlan::total_samples() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.samples.size();
  return n;
}

std::optional<double> ReplayPlan::overall_correspondence() const {
  std::size_t kept = 0, corr = 0;
  for (const auto& t : tasks) {
    kept += t.samples.size();
    corr += static_cast<std::size_t>(t.kept_corresponding);
  }
  if (kept == 0) return std::nullopt;
  return static_cast<double>(corr) / static_cast<double>(kept);
}

ReplayPlan generate_replay(const Model& model, const taskfmt::Vocab& vocab,
                           const std::vector<int>& previous_tasks, const std::vector<int>& counts,
                           numcore::Rng& gen_rng, bool sample_decode) {
  if (previous_tasks.size() != counts.size())
    throw std::invalid_argument("generate_replay: one count per previous task required");

  ReplayPlan plan;
  for (std::size_t i = 0; i < previous_tasks.size(); ++i) {
    const int task = previous_tasks[i];
    ReplayTaskPlan tp;
    tp.task_id = task;
    tp.requested = counts[i];
    const int max_attempts = 3 * tp.requested;
    const int max_new = model.mcfg.max_seq_len - 1;
    const tinylm::AdapterHook hook =
        model.hook(rvae::Mode::Eval, nullptr, model.condition_for(task));

    while (static_cast<int>(tp.samples.size()) < tp.requested && tp.attempts < max_attempts) {
      ++tp.attempts;
      std::vector<int> prompt{vocab.task_token(task)};
      std::vector<int> tokens =
          sample_decode
              ? tinylm::sample_decode(model.lm, model.mcfg, std::move(prompt), vocab.eos(), max_new,
                                      gen_rng, hook)
              : tinylm::greedy_decode(model.lm, model.mcfg, std::move(prompt), vocab.eos(), max_new, hook);
      auto parsed = taskfmt::parse_pseudo(tokens, vocab);
      if (!parsed) {
        ++tp.rejected;
        continue;
      }
      // A parsed sample must survive every encoding it will train under.
      try {
        taskfmt::encode_lm(parsed->sample, vocab, model.mcfg.max_seq_len, true);
        taskfmt::encode_qa(parsed->sample, vocab, model.mcfg.max_seq_len);
        taskfmt::encode_id(parsed->sample, vocab, model.mcfg.max_seq_len);
      } catch (const std::exception&) {
        ++tp.rejected;
        continue;
      }
      if (parsed->corresponding) ++tp.kept_corresponding;
      tp.samples.push_back(std::move(parsed->sample));
    }
    plan.tasks.push_back(std::move(tp));
  }
  return plan;
}

}  // namespace lll::llltrain
