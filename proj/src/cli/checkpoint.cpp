#include "lll/cli/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace lll::cli {

namespace {

constexpr char kMagic[8] = {'L', 'L', 'L', 'C', 'K', 'P', 'T', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& is) {
  const auto n = take<std::uint64_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

void put_reals(std::ostream& os, const std::vector<numcore::Real>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(numcore::Real)));
}

std::vector<numcore::Real> take_reals(std::istream& is) {
  const auto n = take<std::uint64_t>(is);
  std::vector<numcore::Real> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(numcore::Real)));
  if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
  return v;
}

void put_ints(std::ostream& os, const std::vector<int>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(int)));
}

std::vector<int> take_ints(std::istream& is) {
  const auto n = take<std::uint64_t>(is);
  std::vector<int> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(int)));
  if (!is) throw std::runtime_error("checkpoint: truncated id list");
  return v;
}

void put_rng(std::ostream& os, const std::array<std::uint64_t, 4>& st) {
  for (std::uint64_t w : st) put(os, w);
}

std::array<std::uint64_t, 4> take_rng(std::istream& is) {
  std::array<std::uint64_t, 4> st{};
  for (auto& w : st) w = take<std::uint64_t>(is);
  return st;
}

}  // namespace

RunConfig Checkpoint::config() const {
  RunConfig cfg;
  std::istringstream is(config_text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("checkpoint: malformed config line '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    cfg.set(key, value);
  }
  return cfg;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + tmp);
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, Checkpoint::kFormatVersion);

    nlohmann::json header{{"digest", ck.digest},       {"stage_label", ck.stage_label},
                          {"stage", ck.stage},         {"next_epoch", ck.next_epoch},
                          {"finished", ck.finished}};
    put_string(os, header.dump());
    put_string(os, ck.config_text);

    put<std::uint64_t>(os, ck.store.size());
    for (const numcore::Param& p : ck.store.params()) {
      put_string(os, p.name);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(p.tensor.shape.size()));
      for (int d : p.tensor.shape) put<std::int32_t>(os, d);
      put_reals(os, p.tensor.data);
      put_reals(os, p.m);
      put_reals(os, p.v);
    }
    put<std::int64_t>(os, ck.opt_step);
    put_rng(os, ck.rng_init);
    put_rng(os, ck.rng_shuffle);
    put_rng(os, ck.rng_noise);
    put_rng(os, ck.rng_gen);

    put<std::uint64_t>(os, ck.stage_data.size());
    for (const taskfmt::Sample& s : ck.stage_data) {
      put<std::int32_t>(os, s.task_id);
      put_ints(os, s.context);
      put_ints(os, s.question);
      put_ints(os, s.answer);
    }
    put<std::uint64_t>(os, ck.stage_replay.size());
    for (const llltrain::ReplayStats& r : ck.stage_replay) {
      put<std::int32_t>(os, r.task_id);
      put<std::int32_t>(os, r.requested);
      put<std::int32_t>(os, r.kept);
      put<std::int32_t>(os, r.rejected);
      put<std::int32_t>(os, r.attempts);
      put<double>(os, r.correspondence.value_or(-1.0));
    }
    put_string(os, ck.partial_result.is_null() ? std::string("null") : ck.partial_result.dump());
    if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  // Atomic-enough swap so a crash mid-write never clobbers the previous one.
  std::remove(path.c_str());
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("checkpoint: cannot move " + tmp + " into place");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  const auto version = take<std::uint32_t>(is);
  if (version != Checkpoint::kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));

  Checkpoint ck;
  const nlohmann::json header = nlohmann::json::parse(take_string(is));
  ck.digest = header.at("digest").get<std::string>();
  ck.stage_label = header.at("stage_label").get<std::string>();
  ck.stage = header.at("stage").get<int>();
  ck.next_epoch = header.at("next_epoch").get<int>();
  ck.finished = header.at("finished").get<bool>();
  ck.config_text = take_string(is);

  const auto n_params = take<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    const std::string name = take_string(is);
    const auto ndim = take<std::uint32_t>(is);
    numcore::Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(take<std::int32_t>(is));
    auto data = take_reals(is);
    numcore::Param& p = ck.store.add(name, numcore::Tensor(std::move(shape), std::move(data)));
    p.m = take_reals(is);
    p.v = take_reals(is);
    if (p.m.size() != p.tensor.numel() || p.v.size() != p.tensor.numel())
      throw std::runtime_error("checkpoint: moment arrays of " + name + " do not match its shape");
  }
  ck.opt_step = take<std::int64_t>(is);
  ck.rng_init = take_rng(is);
  ck.rng_shuffle = take_rng(is);
  ck.rng_noise = take_rng(is);
  ck.rng_gen = take_rng(is);

  const auto n_samples = take<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    taskfmt::Sample s;
    s.task_id = take<std::int32_t>(is);
    s.context = take_ints(is);
    s.question = take_ints(is);
    s.answer = take_ints(is);
    ck.stage_data.push_back(std::move(s));
  }
  const auto n_replay = take<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_replay; ++i) {
    llltrain::ReplayStats r;
    r.task_id = take<std::int32_t>(is);
    r.requested = take<std::int32_t>(is);
    r.kept = take<std::int32_t>(is);
    r.rejected = take<std::int32_t>(is);
    r.attempts = take<std::int32_t>(is);
    const double corr = take<double>(is);
    if (corr >= 0) r.correspondence = corr;
    ck.stage_replay.push_back(r);
  }
  ck.partial_result = nlohmann::json::parse(take_string(is));
  return ck;
}

}  // namespace lll::cli
