#include "cadpu/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cadpu/errors.hpp"

namespace cadpu {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "r=" << r << "\n";
  out << "n_in=" << n_in << "\n";
  out << "alpha=" << fmt_double(alpha) << "\n";
  out << "beta=" << fmt_double(beta) << "\n";
  out << "gamma=" << fmt_double(gamma) << "\n";
  out << "k=" << k << "\n";
  out << "epsilon=" << fmt_double(epsilon) << "\n";
  out << "lr_g=" << fmt_double(lr_g) << "\n";
  out << "lr_d=" << fmt_double(lr_d) << "\n";
  out << "decay=" << fmt_double(decay) << "\n";
  out << "decay_interval=" << decay_interval << "\n";
  out << "batch=" << batch << "\n";
  out << "epochs=" << epochs << "\n";
  out << "seed=" << seed << "\n";
  out << "k_feature=" << k_feature << "\n";
  out << "widths=";
  for (std::size_t i = 0; i < widths.size(); ++i)
    out << (i ? "," : "") << widths[i];
  out << "\n";
  out << "lift_dim=" << lift_dim << "\n";
  out << "fuse_dim=" << fuse_dim << "\n";
  out << "expand_dim=" << expand_dim << "\n";
  out << "val_fraction=" << fmt_double(val_fraction) << "\n";
  out << "emd_eps_frac=" << fmt_double(emd_eps_frac) << "\n";
  out << "dense_total=" << dense_total << "\n";
  out << "patches=" << patches << "\n";
  return out.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);

    auto as_u64 = [&](const std::string& v) { return std::stoull(v); };
    auto as_d = [&](const std::string& v) { return std::stod(v); };

    if (key == "r") cfg.r = as_u64(value);
    else if (key == "n_in") cfg.n_in = as_u64(value);
    else if (key == "alpha") cfg.alpha = as_d(value);
    else if (key == "beta") cfg.beta = as_d(value);
    else if (key == "gamma") cfg.gamma = as_d(value);
    else if (key == "k") cfg.k = as_u64(value);
    else if (key == "epsilon") cfg.epsilon = as_d(value);
    else if (key == "lr_g") cfg.lr_g = as_d(value);
    else if (key == "lr_d") cfg.lr_d = as_d(value);
    else if (key == "decay") cfg.decay = as_d(value);
    else if (key == "decay_interval") cfg.decay_interval = static_cast<std::int64_t>(as_u64(value));
    else if (key == "batch") cfg.batch = as_u64(value);
    else if (key == "epochs") cfg.epochs = as_u64(value);
    else if (key == "seed") cfg.seed = as_u64(value);
    else if (key == "k_feature") cfg.k_feature = as_u64(value);
    else if (key == "widths") {
      cfg.widths.clear();
      std::istringstream ws(value);
      std::string tok;
      while (std::getline(ws, tok, ','))
        cfg.widths.push_back(std::stoi(tok));
      if (cfg.widths.size() != 3)
        throw DataError("config: widths expects 3 comma-separated values");
    }
    else if (key == "lift_dim") cfg.lift_dim = std::stoi(value);
    else if (key == "fuse_dim") cfg.fuse_dim = std::stoi(value);
    else if (key == "expand_dim") cfg.expand_dim = std::stoi(value);
    else if (key == "val_fraction") cfg.val_fraction = as_d(value);
    else if (key == "emd_eps_frac") cfg.emd_eps_frac = as_d(value);
    else if (key == "dense_total") cfg.dense_total = as_u64(value);
    else if (key == "patches") cfg.patches = as_u64(value);
    else throw DataError("config: unknown key '" + key + "'");
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void TrainConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << to_text();
}

}  // namespace cadpu
