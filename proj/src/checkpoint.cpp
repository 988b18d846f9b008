#include "nerp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nerp/errors.hpp"

namespace nerp {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

using nlohmann::json;

template <typename T>
void append(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void append_doubles(std::string& out, const std::vector<double>& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T take() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::vector<double> take_doubles(std::size_t n) {
    need(n * sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw InputFault("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const RunConfig& config, const TrainState& state) {
  Checkpoint c;
  c.config = config;
  c.step = state.step;
  c.rng = state.rng;
  c.optim_step = state.optim.step;
  c.layout = state.tape.slots();
  c.values.assign(state.tape.values().begin(), state.tape.values().end());
  c.m = state.optim.m;
  c.v = state.optim.v;
  return c;
}

TrainState restore_train_state(const Checkpoint& ckpt, const SyntheticScene& scene) {
  TrainState s;
  s.model = build_model(make_model_config(ckpt.config, scene), s.tape);
  const auto& slots = s.tape.slots();
  bool match = slots.size() == ckpt.layout.size() && ckpt.values.size() == s.tape.size();
  for (std::size_t i = 0; match && i < slots.size(); ++i) {
    match = slots[i].name == ckpt.layout[i].name && slots[i].group == ckpt.layout[i].group &&
            slots[i].shape == ckpt.layout[i].shape;
  }
  if (!match) throw InputFault("checkpoint tensor table does not match its config");
  std::copy(ckpt.values.begin(), ckpt.values.end(), s.tape.values().begin());
  s.optim.settings = ckpt.config.optimizer;
  s.optim.step = ckpt.optim_step;
  s.optim.m = ckpt.m;
  s.optim.v = ckpt.v;
  s.rng = ckpt.rng;
  s.step = ckpt.step;
  return s;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.m.size() != ckpt.values.size() || ckpt.v.size() != ckpt.values.size()) {
    throw std::invalid_argument("checkpoint moments do not match the parameter count");
  }
  json layout = json::array();
  for (const auto& s : ckpt.layout) layout.push_back({{"name", s.name}, {"group", s.group}, {"shape", s.shape}});
  const json header = {{"config", to_json(ckpt.config)},
                       {"step", ckpt.step},
                       {"rng", {{"seed", ckpt.rng.seed}, {"counter", ckpt.rng.counter}}},
                       {"optim_step", ckpt.optim_step},
                       {"layout", layout},
                       {"count", ckpt.values.size()}};
  const std::string text = header.dump();
  std::string out;
  out.append("NRP3", 4);
  append(out, kCheckpointVersion);
  append(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  append_doubles(out, ckpt.values);
  append_doubles(out, ckpt.m);
  append_doubles(out, ckpt.v);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.take_string(4) != "NRP3") throw InputFault("not a checkpoint (missing NRP3 magic)");
  const auto version = r.take<std::uint32_t>();
  if (version != kCheckpointVersion) throw InputFault("unsupported checkpoint version " + std::to_string(version));
  const auto length = r.take<std::uint64_t>();
  json header;
  Checkpoint c;
  std::size_t count = 0;
  try {
    header = json::parse(r.take_string(length));
    c.config = run_config_from_json(header.at("config"));
    c.step = header.at("step").get<std::int64_t>();
    c.rng.seed = header.at("rng").at("seed").get<std::uint64_t>();
    c.rng.counter = header.at("rng").at("counter").get<std::uint64_t>();
    c.optim_step = header.at("optim_step").get<std::int64_t>();
    for (const auto& e : header.at("layout")) {
      TensorSlot s;
      s.name = e.at("name").get<std::string>();
      s.group = e.at("group").get<std::string>();
      s.shape = e.at("shape").get<std::vector<int>>();
      c.layout.push_back(s);
    }
    count = header.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw InputFault(std::string("checkpoint header: ") + e.what());
  }
  std::size_t offset = 0;
  for (auto& s : c.layout) {
    s.offset = offset;
    s.size = 1;
    for (int d : s.shape) s.size *= static_cast<std::size_t>(d);
    offset += s.size;
  }
  if (offset != count) throw InputFault("checkpoint tensor table does not cover the payload");
  c.values = r.take_doubles(count);
  c.m = r.take_doubles(count);
  c.v = r.take_doubles(count);
  if (!r.done()) throw InputFault("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputFault("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputFault("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputFault("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace nerp
