#include "lll/bench/tasks.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "lll/bench/metrics.hpp"

namespace lll::bench {

using numcore::Rng;
using taskfmt::Sample;
using taskfmt::Vocab;

namespace {

const std::vector<std::string> kFillers{
    "river", "stone", "bird",  "cloud", "sand",  "wave",  "wind",   "tree",   "hill",  "rain",
    "snow",  "field", "light", "shadow", "house", "door",  "window", "garden", "road",  "bridge",
    "boat",  "train", "horse", "apple",  "bread", "water", "glass",  "paper",  "clock", "chair",
    "song",  "story", "night", "morning", "cat",  "dog",   "fish",   "leaf",   "root",  "branch",
    "star",  "moon",  "lake",  "ocean",  "grass", "plain", "valley", "candle", "stairs", "wall",
    "floor", "roof",  "box",   "coin",   "rope",  "wheel", "bell",   "drum",   "flute", "brush",
    "spoon", "plate", "cup",   "knife",  "map",   "flag",  "tower",  "gate",   "yard",  "barn",
    "nest",  "shell", "stonefruit", "berry", "seed", "vine", "cliff", "cave",  "pond",  "brook"};

const std::vector<std::string> kPositive{"good", "great", "fine", "lovely", "superb"};
const std::vector<std::string> kNegative{"bad", "awful", "poor", "dreadful", "grim"};

const std::vector<std::string> kClsQuestion{"is", "this", "positive", "or", "negative"};
const std::vector<std::string> kSpanQuestion{"what", "follows", "the", "marker"};
const std::vector<std::string> kSlotQuestion{"what", "is", "the", "change", "in", "state"};
const std::vector<std::string> kIdQuestion{"which", "task", "is", "this"};

constexpr const char* kMarker = "mark";

struct SlotDef {
  const char* name;
  std::vector<std::string> values;
  std::vector<std::vector<std::string>> templates;  // "@" marks the value position
};

const std::vector<SlotDef>& slot_defs() {
  static const std::vector<SlotDef> defs{
      {"price",
       {"cheap", "pricey", "modest"},
       {{"i", "want", "a", "@", "restaurant", "please"},
        {"find", "me", "a", "@", "place", "to", "eat"},
        {"give", "me", "a", "@", "option", "now"}}},
      {"food",
       {"italian", "chinese", "indian", "thai", "korean"},
       {{"i", "would", "like", "some", "@", "food"},
        {"find", "a", "restaurant", "serving", "@", "dishes"},
        {"book", "a", "table", "for", "@", "cuisine"}}},
      {"area",
       {"north", "south", "east", "west", "centre"},
       {{"find", "a", "place", "in", "the", "@", "part"},
        {"i", "want", "to", "eat", "in", "the", "@", "area"},
        {"look", "for", "somewhere", "@", "please"}}}};
  return defs;
}

Rng index_rng(std::uint64_t seed, int index) {
  return Rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(index) + 1);
}

std::vector<int> random_fillers(const Vocab& v, Rng& rng, int n) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    out.push_back(v.id(kFillers[rng.below(static_cast<std::uint32_t>(kFillers.size()))]));
  return out;
}

}  // namespace

const char* metric_name(Metric m) { return m == Metric::EM ? "em" : "nf1"; }

std::vector<ToyTask> toy_suite(std::uint64_t cls_seed, std::uint64_t span_seed, std::uint64_t slot_seed) {
  return {
      ToyTask{0, "cls", cls_seed, kClsQuestion, "positive|negative", Metric::EM},
      ToyTask{1, "span", span_seed, kSpanQuestion, "two context tokens after the marker", Metric::NF1},
      ToyTask{2, "slot", slot_seed, kSlotQuestion, "slotname : value", Metric::EM},
  };
}

Vocab toy_vocab() {
  std::vector<std::string> content = kFillers;
  auto extend = [&content](const std::vector<std::string>& more) {
    content.insert(content.end(), more.begin(), more.end());
  };
  extend(kPositive);
  extend(kNegative);
  extend(kClsQuestion);
  extend(kSpanQuestion);
  extend(kSlotQuestion);
  extend(kIdQuestion);
  content.push_back(kMarker);
  content.push_back(":");
  for (const SlotDef& def : slot_defs()) {
    content.push_back(def.name);
    extend(def.values);
    for (const auto& tpl : def.templates)
      for (const auto& w : tpl)
        if (w != "@") content.push_back(w);
  }
  return Vocab::build({"cls", "span", "slot"}, {kClsQuestion, kSpanQuestion, kSlotQuestion},
                      kIdQuestion, std::move(content));
}

std::vector<Sample> gen_task_cls(const Vocab& v, std::uint64_t seed, int n, int index_base) {
  if (n < 1) throw std::invalid_argument("gen_task_cls: n must be at least 1");
  std::vector<Sample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = index_rng(seed, index_base + i);
    const bool positive = i % 2 == 0;  // ceil(n/2) positive, floor(n/2) negative
    const auto& pool = positive ? kPositive : kNegative;
    Sample s;
    s.task_id = 0;
    s.context = random_fillers(v, rng, 4 + static_cast<int>(rng.below(3)));
    const int pos = static_cast<int>(rng.below(static_cast<std::uint32_t>(s.context.size() + 1)));
    s.context.insert(s.context.begin() + pos,
                     v.id(pool[rng.below(static_cast<std::uint32_t>(pool.size()))]));
    s.question = v.encode(kClsQuestion);
    s.answer = {v.id(positive ? "positive" : "negative")};
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> gen_task_span(const Vocab& v, std::uint64_t seed, int n, int index_base) {
  if (n < 1) throw std::invalid_argument("gen_task_span: n must be at least 1");
  std::vector<Sample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = index_rng(seed, index_base + i);
    Sample s;
    s.task_id = 1;
    const int n_fill = 4 + static_cast<int>(rng.below(3));
    s.context = random_fillers(v, rng, n_fill);
    // at least two tokens must follow the marker
    const int pos = static_cast<int>(rng.below(static_cast<std::uint32_t>(n_fill - 1)));
    s.context.insert(s.context.begin() + pos, v.id(kMarker));
    s.question = v.encode(kSpanQuestion);
    s.answer = {s.context[pos + 1], s.context[pos + 2]};
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> gen_task_slot(const Vocab& v, std::uint64_t seed, int n, int index_base) {
  if (n < 1) throw std::invalid_argument("gen_task_slot: n must be at least 1");
  const auto& defs = slot_defs();
  std::vector<Sample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = index_rng(seed, index_base + i);
    const SlotDef& def = defs[rng.below(static_cast<std::uint32_t>(defs.size()))];
    const std::string& value = def.values[rng.below(static_cast<std::uint32_t>(def.values.size()))];
    const auto& tpl = def.templates[rng.below(static_cast<std::uint32_t>(def.templates.size()))];
    Sample s;
    s.task_id = 2;
    for (const std::string& w : tpl) s.context.push_back(v.id(w == "@" ? value : w));
    s.question = v.encode(kSlotQuestion);
    s.answer = {v.id(def.name), v.id(":"), v.id(value)};
    out.push_back(std::move(s));
  }
  return out;
}

std::function<double(const std::vector<int>&, const std::vector<int>&)> scorer_for(
    const ToyTask& task, const Vocab& v) {
  const Metric metric = task.metric;
  const Vocab* vocab = &v;
  return [metric, vocab](const std::vector<int>& pred, const std::vector<int>& gold) {
    const auto p = vocab->decode(pred);
    const auto g = vocab->decode(gold);
    return metric == Metric::EM ? score_em(p, g) : score_nf1(p, g);
  };
}

llltrain::TaskData make_task_data(const Vocab& v, const ToyTask& task, int n_train, int n_test) {
  auto gen = [&](int n, int base) {
    switch (task.id) {
      case 0: return gen_task_cls(v, task.seed, n, base);
      case 1: return gen_task_span(v, task.seed, n, base);
      case 2: return gen_task_slot(v, task.seed, n, base);
      default: throw std::invalid_argument("make_task_data: unknown task id " + std::to_string(task.id));
    }
  };
  llltrain::TaskData t;
  t.task_id = task.id;
  t.name = task.name;
  t.train = gen(n_train, 0);
  t.test = gen(n_test, kTestIndexBase);
  t.scorer = scorer_for(task, v);
  return t;
}

std::vector<std::vector<int>> all_task_orders() {
  return {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
}

std::vector<int> parse_order(const std::string& names_csv, const std::vector<ToyTask>& suite) {
  std::vector<int> order;
  std::stringstream ss(names_csv);
  std::string name;
  while (std::getline(ss, name, ',')) {
    auto it = std::find_if(suite.begin(), suite.end(), [&](const ToyTask& t) { return t.name == name; });
    if (it == suite.end()) throw std::invalid_argument("order: unknown task name '" + name + "'");
    order.push_back(it->id);
  }
  if (order.empty()) throw std::invalid_argument("order: empty task list");
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("order: duplicate task in '" + names_csv + "'");
  return order;
}

std::string order_string(const std::vector<int>& order, const std::vector<ToyTask>& suite) {
  std::string out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) out += ',';
    out += suite[order[i]].name;
  }
  return out;
}

}  // namespace lll::bench
