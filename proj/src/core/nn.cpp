#include "asplat/nn.hpp"

#include <cmath>
#include <cstring>

#include <json.hpp>

#include "asplat/error.hpp"
#include "asplat/io.hpp"

namespace asplat::nn {

ad::Parameter& ParamSet::add(const std::string& name, std::vector<int> shape) {
  require(!has(name), ErrorCode::kContract, "duplicate parameter " + name);
  auto p = std::make_unique<ad::Parameter>();
  p->name = name;
  p->value.assign(ad::numel_of(shape), 0.0);
  p->grad.assign(p->value.size(), 0.0);
  p->shape = std::move(shape);
  params_.push_back(std::move(p));
  return *params_.back();
}

ad::Parameter& ParamSet::get(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  fail(ErrorCode::kContract, "unknown parameter " + name);
}

const ad::Parameter& ParamSet::get(const std::string& name) const {
  return const_cast<ParamSet*>(this)->get(name);
}

bool ParamSet::has(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return true;
  return false;
}

std::vector<ad::Parameter*> ParamSet::all() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const ad::Parameter*> ParamSet::all() const {
  std::vector<const ad::Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p->grad.assign(p->value.size(), 0.0);
}

void ParamSet::set_trainable(bool on) {
  for (auto& p : params_) p->trainable = on;
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& p : params_) out.params_.push_back(std::make_unique<ad::Parameter>(*p));
  return out;
}

void xavier(ad::Parameter& p, int fan_in, int fan_out, std::mt19937_64& rng, double gain) {
  const double b = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-b, b);
  for (auto& v : p.value) v = static_cast<float>(u(rng));
}

void fill(ad::Parameter& p, double v) { p.value.assign(p.value.size(), static_cast<float>(v)); }

Adam::Adam(std::vector<ad::Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::Parameter& p = *params_[k];
    if (!p.trainable) continue;
    require(p.grad.size() == p.value.size(), ErrorCode::kContract, "adam: gradient size mismatch");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      require(std::isfinite(g), ErrorCode::kDivergence,
              "non-finite gradient in " + p.name + " at step " + std::to_string(t_));
      m_[k][i] = static_cast<float>(b1 * m_[k][i] + (1 - b1) * g);
      v_[k][i] = static_cast<float>(b2 * v_[k][i] + (1 - b2) * g * g);
      const double mh = m_[k][i] / c1, vh = v_[k][i] / c2;
      p.value[i] = static_cast<float>(p.value[i] - config_.lr * mh / (std::sqrt(vh) + config_.eps));
    }
  }
}

void quantize(ParamSet& params) {
  for (auto* p : params.all())
    for (auto& v : p->value) v = static_cast<float>(v);
}

namespace {

constexpr char kMagic[4] = {'A', 'S', 'P', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_f32(std::vector<std::uint8_t>& out, const std::vector<double>& values) {
  const std::size_t at = out.size();
  out.resize(at + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(out.data() + at + 4 * i, &f, 4);
  }
}

void get_f32(const std::vector<std::uint8_t>& in, std::size_t& pos, std::vector<double>& values) {
  require(in.size() - pos >= values.size() * 4, ErrorCode::kParse, "checkpoint: truncated tensor data");
  for (auto& v : values) {
    float f;
    std::memcpy(&f, in.data() + pos, 4);
    pos += 4;
    v = f;
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json h;
  h["section"] = ck.section;
  h["config"] = nlohmann::json::parse(ck.config_json);
  h["extra"] = nlohmann::json::parse(ck.extra_json);
  h["tensors"] = nlohmann::json::array();
  std::vector<const ad::Parameter*> order;
  for (const auto& [group, set] : ck.groups)
    for (const auto* p : set->all()) {
      h["tensors"].push_back({{"group", group}, {"name", p->name}, {"shape", p->shape}});
      order.push_back(p);
    }
  if (ck.optimizer) {
    const AdamConfig& c = ck.optimizer->config();
    h["optimizer"] = {{"type", "adam"}, {"step", ck.optimizer->steps()}, {"lr", c.lr},
                      {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
  }
  const std::string header = h.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  auto put_u = [&](auto v) {
    std::uint8_t b[sizeof v];
    std::memcpy(b, &v, sizeof v);
    out.insert(out.end(), b, b + sizeof v);
  };
  put_u(kVersion);
  put_u(static_cast<std::uint64_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto* p : order) put_f32(out, p->value);
  if (ck.optimizer) {
    require(ck.optimizer->first().size() == order.size(), ErrorCode::kContract,
            "checkpoint: optimizer does not cover the saved parameters");
    for (const auto& m : ck.optimizer->first()) put_f32(out, m);
    for (const auto& v : ck.optimizer->second()) put_f32(out, v);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  // Write to a sibling then rename, so an interrupted save never leaves a torn file.
  const auto tmp = path.string() + ".tmp";
  io::write_file(tmp, encode_checkpoint(ck));
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& in,
                                   const std::vector<std::pair<std::string, ParamSet*>>& groups,
                                   Adam* optimizer) {
  require(in.size() >= 16 && std::memcmp(in.data(), kMagic, 4) == 0, ErrorCode::kParse,
          "checkpoint: bad magic");
  std::uint32_t version;
  std::uint64_t hlen;
  std::memcpy(&version, in.data() + 4, 4);
  std::memcpy(&hlen, in.data() + 8, 8);
  require(version == kVersion, ErrorCode::kParse, "checkpoint: unsupported version");
  require(in.size() - 16 >= hlen, ErrorCode::kParse, "checkpoint: truncated header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(in.begin() + 16, in.begin() + 16 + static_cast<long>(hlen));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("checkpoint header: ") + e.what());
  }
  LoadedCheckpoint out;
  std::size_t pos = 16 + hlen;
  std::vector<ad::Parameter*> order;
  try {
    out.section = h.at("section").get<std::string>();
    out.config_json = h.at("config").dump();
    out.extra_json = h.value("extra", nlohmann::json::object()).dump();
    for (const auto& t : h.at("tensors")) {
      const auto group = t.at("group").get<std::string>();
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<std::vector<int>>();
      ParamSet* target = nullptr;
      for (const auto& [g, set] : groups)
        if (g == group) target = set;
      std::vector<double> values(ad::numel_of(shape));
      get_f32(in, pos, values);
      if (!target) continue;
      require(target->has(name), ErrorCode::kParse, "checkpoint: unexpected tensor " + group + "/" + name);
      ad::Parameter& p = target->get(name);
      require(p.shape == shape, ErrorCode::kParse, "checkpoint: shape mismatch for " + group + "/" + name);
      p.value = values;
      order.push_back(&p);
    }
    for (const auto& [g, set] : groups)
      for (const auto* p : set->all()) {
        bool found = false;
        for (const auto* q : order) found |= q == p;
        require(found, ErrorCode::kParse, "checkpoint: missing tensor " + g + "/" + p->name);
      }
    if (h.contains("optimizer")) {
      out.has_optimizer = true;
      out.optimizer_steps = h["optimizer"].at("step").get<std::uint64_t>();
      if (optimizer) {
        require(optimizer->first().size() == order.size(), ErrorCode::kParse,
                "checkpoint: optimizer layout mismatch");
        for (auto& m : optimizer->first()) get_f32(in, pos, m);
        for (auto& v : optimizer->second()) get_f32(in, pos, v);
        optimizer->set_steps(out.optimizer_steps);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("checkpoint header: ") + e.what());
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::vector<std::pair<std::string, ParamSet*>>& groups,
                                 Adam* optimizer) {
  require(std::filesystem::exists(path), ErrorCode::kMissingCheckpoint,
          "checkpoint not found: " + path.string());
  return decode_checkpoint(io::read_file(path), groups, optimizer);
}

}  // namespace asplat::nn
