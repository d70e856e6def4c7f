// Copyright 2026 The taskaug Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "taskaug/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "taskaug/error.hpp"

namespace taskaug {

namespace {

struct Value {
  std::string scalar;
  std::vector<std::string> list;
  bool is_list = false;
};

struct Field {
  std::function<void(RunConfig&, const Value&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

double to_double(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw DataError("config: " + key + " expects a number, got '" + s + "'");
  return v;
}

long long to_int(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw DataError("config: " + key + " expects an integer, got '" + s + "'");
  return v;
}

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

const Value& scalar(const std::string& key, const Value& v) {
  if (v.is_list) throw DataError("config: " + key + " expects a single value");
  return v;
}

Field real(std::function<double&(RunConfig&)> ref) {
  return {[ref](RunConfig& c, const Value& v) { ref(c) = to_double("", scalar("", v).scalar); },
          [ref](const RunConfig& c) { return num(ref(const_cast<RunConfig&>(c))); }};
}

Field integer(std::function<int&(RunConfig&)> ref) {
  return {[ref](RunConfig& c, const Value& v) { ref(c) = static_cast<int>(to_int("", scalar("", v).scalar)); },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <int N, class Vec>
Field vector(std::function<Vec&(RunConfig&)> ref) {
  return {[ref](RunConfig& c, const Value& v) {
            if (!v.is_list || static_cast<int>(v.list.size()) != N)
              throw DataError("config: expected a list of " + std::to_string(N) + " numbers");
            for (int i = 0; i < N; ++i) ref(c)[i] = to_double("", v.list[static_cast<std::size_t>(i)]);
          },
          [ref](const RunConfig& c) {
            std::string s = "[";
            for (int i = 0; i < N; ++i) s += (i ? ", " : "") + num(ref(const_cast<RunConfig&>(c))[i]);
            return s + "]";
          }};
}

Field choice(std::function<std::string(const RunConfig&)> get, std::function<void(RunConfig&, const std::string&)> set) {
  return {[set](RunConfig& c, const Value& v) { set(c, unquote(scalar("", v).scalar)); },
          [get](const RunConfig& c) { return "\"" + get(c) + "\""; }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = [] {
    using B = evalbench::BenchmarkConfig;
    auto b = [](RunConfig& c) -> B& { return c.bench; };
    std::vector<std::pair<std::string, Field>> v;
    v.emplace_back("mode", choice([](const RunConfig& c) { return c.bench.mode == RendererMode::Vae ? "vae" : "analytic"; },
                                  [](RunConfig& c, const std::string& s) {
                                    if (s == "analytic") c.bench.mode = RendererMode::Analytic;
                                    else if (s == "vae") c.bench.mode = RendererMode::Vae;
                                    else throw DataError("config: mode must be \"analytic\" or \"vae\", got '" + s + "'");
                                  }));
    v.emplace_back("seed", Field{[](RunConfig& c, const Value& x) {
                                   const long long s = to_int("seed", scalar("seed", x).scalar);
                                   if (s < 0) throw DataError("config: seed must be non-negative");
                                   c.seed = static_cast<std::uint64_t>(s);
                                 },
                                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    v.emplace_back("out_dir", choice([](const RunConfig& c) { return c.out_dir.string(); },
                                     [](RunConfig& c, const std::string& s) { c.out_dir = s; }));
    v.emplace_back("image_size", integer([=](RunConfig& c) -> int& { return b(c).image_size; }));
    v.emplace_back("n_obs", integer([=](RunConfig& c) -> int& { return b(c).scene.n_obs; }));
    v.emplace_back("past_len", integer([=](RunConfig& c) -> int& { return b(c).task.past_len; }));
    v.emplace_back("horizon", integer([=](RunConfig& c) -> int& { return b(c).task.horizon; }));
    v.emplace_back("dt", real([=](RunConfig& c) -> double& { return b(c).task.dt; }));
    v.emplace_back("data.n_train", integer([=](RunConfig& c) -> int& { return b(c).n_train; }));
    v.emplace_back("data.n_test", integer([=](RunConfig& c) -> int& { return b(c).n_test; }));
    v.emplace_back("data.n_ood", integer([=](RunConfig& c) -> int& { return b(c).n_ood; }));
    v.emplace_back("data.n_extra", integer([=](RunConfig& c) -> int& { return b(c).n_extra; }));
    v.emplace_back("mpc.dynamics",
                   choice([](const RunConfig& c) {
                            return c.bench.mpc.dynamics == mpc::Dynamics::DoubleIntegrator ? "double_integrator"
                                                                                          : "unicycle";
                          },
                          [](RunConfig& c, const std::string& s) {
                            if (s == "unicycle") c.bench.mpc.dynamics = mpc::Dynamics::UnicycleLinearized;
                            else if (s == "double_integrator") c.bench.mpc.dynamics = mpc::Dynamics::DoubleIntegrator;
                            else throw DataError("config: mpc.dynamics must be \"unicycle\" or \"double_integrator\"");
                          }));
    v.emplace_back("mpc.q_diag", vector<4, Eigen::Vector4d>([=](RunConfig& c) -> Eigen::Vector4d& { return b(c).mpc.q_diag; }));
    v.emplace_back("mpc.r_diag", vector<2, Eigen::Vector2d>([=](RunConfig& c) -> Eigen::Vector2d& { return b(c).mpc.r_diag; }));
    v.emplace_back("mpc.accel_max", real([=](RunConfig& c) -> double& { return b(c).mpc.accel_max; }));
    v.emplace_back("mpc.steer_rate_max", real([=](RunConfig& c) -> double& { return b(c).mpc.steer_rate_max; }));
    v.emplace_back("mpc.v_min", real([=](RunConfig& c) -> double& { return b(c).mpc.v_min; }));
    v.emplace_back("mpc.v_max", real([=](RunConfig& c) -> double& { return b(c).mpc.v_max; }));
    v.emplace_back("mpc.margin", real([=](RunConfig& c) -> double& { return b(c).mpc.margin; }));
    v.emplace_back("mpc.activation_radius", real([=](RunConfig& c) -> double& { return b(c).mpc.activation_radius; }));
    v.emplace_back("adversary.kappa", real([=](RunConfig& c) -> double& { return b(c).adversary.kappa; }));
    v.emplace_back("adversary.steps", integer([=](RunConfig& c) -> int& { return b(c).adversary.steps; }));
    v.emplace_back("adversary.step_size", real([=](RunConfig& c) -> double& { return b(c).adversary.step_size; }));
    v.emplace_back("adversary.clip_norm", real([=](RunConfig& c) -> double& { return b(c).adversary.clip_norm; }));
    v.emplace_back("adversary.init_std", real([=](RunConfig& c) -> double& { return b(c).adversary.init_std; }));
    v.emplace_back("adversary.per_record", integer([=](RunConfig& c) -> int& { return b(c).adversary.per_record; }));
    v.emplace_back("adversary.relabel",
                   choice([](const RunConfig& c) { return c.bench.adversary.relabel_oracle ? "oracle" : "none"; },
                          [](RunConfig& c, const std::string& s) {
                            if (s == "none") c.bench.adversary.relabel_oracle = false;
                            else if (s == "oracle") c.bench.adversary.relabel_oracle = true;
                            else throw DataError("config: adversary.relabel must be \"none\" or \"oracle\"");
                          }));
    v.emplace_back("task.epochs", integer([=](RunConfig& c) -> int& { return b(c).train.max_epochs; }));
    v.emplace_back("task.lr", real([=](RunConfig& c) -> double& { return b(c).train.lr; }));
    v.emplace_back("task.batch_size", integer([=](RunConfig& c) -> int& { return b(c).train.batch_size; }));
    v.emplace_back("task.patience", integer([=](RunConfig& c) -> int& { return b(c).train.patience; }));
    v.emplace_back("task.val_fraction", real([=](RunConfig& c) -> double& { return b(c).train.val_fraction; }));
    v.emplace_back("vae.image_size", integer([=](RunConfig& c) -> int& { return b(c).vae.image_size; }));
    v.emplace_back("vae.latent_dim", integer([=](RunConfig& c) -> int& { return b(c).vae.latent_dim; }));
    v.emplace_back("vae.epochs", integer([=](RunConfig& c) -> int& { return b(c).vae_train.epochs; }));
    v.emplace_back("vae.lr", real([=](RunConfig& c) -> double& { return b(c).vae_train.lr; }));
    v.emplace_back("vae.batch_size", integer([=](RunConfig& c) -> int& { return b(c).vae_train.batch_size; }));
    return v;
  }();
  return f;
}

Value parse_value(const std::string& raw) {
  Value v;
  if (!raw.empty() && raw.front() == '[') {
    if (raw.back() != ']') throw DataError("unterminated list");
    v.is_list = true;
    std::stringstream ss(raw.substr(1, raw.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) v.list.push_back(item);
    }
    return v;
  }
  v.scalar = raw;
  return v;
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

}  // namespace

void RunConfig::finalize() {
  evalbench::BenchmarkConfig& b = bench;
  b.mpc.horizon = b.task.horizon;
  b.mpc.dt = b.task.dt;
  b.out_dir = out_dir;
  if (b.mode == RendererMode::Vae) {
    b.task.perception = taskmodel::Perception::VaeEncoder;
    b.task.image_size = b.vae.image_size;
    b.task.embed_dim = b.vae.latent_dim;
  } else {
    b.task.perception = taskmodel::Perception::Compact;
    b.task.image_size = b.image_size;
  }
  b.task.vae = b.vae;
  if (b.image_size < 10 || b.scene.n_obs < 0 || b.task.past_len < 1 || b.task.horizon < 1 || !(b.task.dt > 0))
    throw DataError("config: image_size, past_len, horizon and dt must be positive");
  if (b.vae.image_size < 4 || b.vae.image_size % 4 != 0 || b.vae.latent_dim < 1)
    throw DataError("config: vae.image_size must be a positive multiple of 4 and vae.latent_dim positive");
  if (b.train.max_epochs < 1 || b.train.batch_size < 1 || b.train.patience < 1 || !(b.train.lr > 0))
    throw DataError("config: task epochs, batch_size, patience and lr must be positive");
  if (b.vae_train.epochs < 1 || b.vae_train.batch_size < 1 || !(b.vae_train.lr > 0))
    throw DataError("config: vae epochs, batch_size and lr must be positive");
  if (b.adversary.per_record < 1) throw DataError("config: adversary.per_record must be positive");
  if (!(b.mpc.v_min <= b.mpc.v_max)) throw DataError("config: mpc.v_min exceeds mpc.v_max");
  try {
    b.validate();
  } catch (const ShapeError& e) {
    throw DataError(std::string("config: ") + e.what());
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig c;
  std::map<std::string, const Field*> index;
  for (const auto& [k, f] : fields()) index[k] = &f;
  std::stringstream ss{std::string(text)};
  std::string line, section;
  std::vector<std::string> unknown;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[' && t.find('=') == std::string::npos) {
      if (t.back() != ']') throw DataError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = (section.empty() ? "" : section + ".") + trim(t.substr(0, eq));
    const std::string raw = trim(t.substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) {
      unknown.push_back(key);
      continue;
    }
    try {
      it->second->set(c, parse_value(raw));
    } catch (const DataError& e) {
      throw DataError("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  if (!unknown.empty()) {
    std::string msg = "config: unknown keys:";
    for (const std::string& k : unknown) msg += " " + k;
    throw DataError(msg);
  }
  c.finalize();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& c) {
  std::string out, section;
  for (const auto& [key, f] : fields()) {
    const auto dot = key.find('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += (dot == std::string::npos ? key : key.substr(dot + 1)) + " = " + f.get(c) + "\n";
  }
  return out;
}

}  // namespace taskaug
