#include "runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ssg {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  SSG_CHECK(end == value.c_str() + value.size() && !value.empty() && errno != ERANGE &&
                std::isfinite(v),
            config_error, "config key '" + key + "' has a malformed number: '" + value + "'");
  return v;
}

int64_t parse_int(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  SSG_CHECK(end == value.c_str() + value.size() && !value.empty() && errno != ERANGE,
            config_error, "config key '" + key + "' has a malformed integer: '" + value + "'");
  return v;
}

uint64_t parse_seed(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  SSG_CHECK(end == value.c_str() + value.size() && !value.empty() && errno != ERANGE &&
                value[0] != '-',
            config_error, "config key '" + key + "' has a malformed seed: '" + value + "'");
  return v;
}

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  pyramid.validate();
  train.validate();
  SSG_CHECK(input_resolution >= 2, config_error, "input.resolution must be at least 2");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::vector<std::pair<std::string, Setter>> table = {
      {"pyramid.ratio", [&](const std::string& k, const std::string& v) { c.pyramid.r = parse_double(k, v); }},
      {"pyramid.min_dim", [&](const std::string& k, const std::string& v) { c.pyramid.min_dim = int(parse_int(k, v)); }},
      {"pyramid.blur_sigma", [&](const std::string& k, const std::string& v) { c.pyramid.blur_sigma = parse_double(k, v); }},
      {"pyramid.num_scales", [&](const std::string& k, const std::string& v) { c.pyramid.num_scales = int(parse_int(k, v)); }},
      {"train.alpha", [&](const std::string& k, const std::string& v) { c.train.alpha = parse_double(k, v); }},
      {"train.gp_weight", [&](const std::string& k, const std::string& v) { c.train.gp_weight = parse_double(k, v); }},
      {"train.iters_per_scale", [&](const std::string& k, const std::string& v) { c.train.iters_per_scale = int(parse_int(k, v)); }},
      {"train.d_steps", [&](const std::string& k, const std::string& v) { c.train.d_steps = int(parse_int(k, v)); }},
      {"train.g_steps", [&](const std::string& k, const std::string& v) { c.train.g_steps = int(parse_int(k, v)); }},
      {"train.lr", [&](const std::string& k, const std::string& v) { c.train.lr = parse_double(k, v); }},
      {"train.adam_beta1", [&](const std::string& k, const std::string& v) { c.train.adam_beta1 = parse_double(k, v); }},
      {"train.adam_beta2", [&](const std::string& k, const std::string& v) { c.train.adam_beta2 = parse_double(k, v); }},
      {"train.sigma_hat", [&](const std::string& k, const std::string& v) { c.train.sigma_hat = parse_double(k, v); }},
      {"train.seed", [&](const std::string& k, const std::string& v) { c.train.seed = parse_seed(k, v); }},
      {"train.channels", [&](const std::string& k, const std::string& v) { c.train.channels = parse_int(k, v); }},
      {"train.hidden", [&](const std::string& k, const std::string& v) { c.train.hidden = parse_int(k, v); }},
      {"train.critic_width", [&](const std::string& k, const std::string& v) { c.train.critic_width = parse_int(k, v); }},
      {"train.pool_bins", [&](const std::string& k, const std::string& v) { c.train.pool_bins = parse_int(k, v); }},
      {"input.resolution", [&](const std::string& k, const std::string& v) { c.input_resolution = int(parse_int(k, v)); }},
  };

  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    SSG_CHECK(eq != std::string::npos, config_error,
              "config line is not key=value: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    SSG_CHECK(seen.insert(key).second, config_error, "duplicate config key: '" + key + "'");
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const auto& e) { return e.first == key; });
    SSG_CHECK(it != table.end(), config_error, "unknown config key: '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  SSG_CHECK(f.good(), io_error, "cannot open config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_run_config(buf.str());
}

std::string write_run_config(const RunConfig& c) {
  std::ostringstream out;
  out << "pyramid.ratio=" << format_double(c.pyramid.r) << "\n";
  out << "pyramid.min_dim=" << c.pyramid.min_dim << "\n";
  out << "pyramid.blur_sigma=" << format_double(c.pyramid.blur_sigma) << "\n";
  out << "pyramid.num_scales=" << c.pyramid.num_scales << "\n";
  out << "train.alpha=" << format_double(c.train.alpha) << "\n";
  out << "train.gp_weight=" << format_double(c.train.gp_weight) << "\n";
  out << "train.iters_per_scale=" << c.train.iters_per_scale << "\n";
  out << "train.d_steps=" << c.train.d_steps << "\n";
  out << "train.g_steps=" << c.train.g_steps << "\n";
  out << "train.lr=" << format_double(c.train.lr) << "\n";
  out << "train.adam_beta1=" << format_double(c.train.adam_beta1) << "\n";
  out << "train.adam_beta2=" << format_double(c.train.adam_beta2) << "\n";
  out << "train.sigma_hat=" << format_double(c.train.sigma_hat) << "\n";
  out << "train.seed=" << c.train.seed << "\n";
  out << "train.channels=" << c.train.channels << "\n";
  out << "train.hidden=" << c.train.hidden << "\n";
  out << "train.critic_width=" << c.train.critic_width << "\n";
  out << "train.pool_bins=" << c.train.pool_bins << "\n";
  out << "input.resolution=" << c.input_resolution << "\n";
  return out.str();
}

}  // namespace ssg
