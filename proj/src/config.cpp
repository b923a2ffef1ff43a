#include "ifenn/config.hpp"

#include <fstream>
#include <sstream>

namespace ifenn {

namespace {

double to_double(const std::string& s, long line) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError("bad numeric value '" + s + "' (line " + std::to_string(line) + ")");
  }
}

int to_int(const std::string& s, long line) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError("bad integer value '" + s + "' (line " + std::to_string(line) + ")");
  }
}

bool to_bool(const std::string& s, long line) {
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  throw ConfigError("bad boolean value '" + s + "' (line " + std::to_string(line) + ")");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

Method parse_method(const std::string& s) {
  if (s == "local") return Method::Local;
  if (s == "nonlocal-gradient") return Method::NonlocalGradient;
  if (s == "ifenn") return Method::Ifenn;
  throw ConfigError("unknown method '" + s + "' (expected local|nonlocal-gradient|ifenn)");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Local: return "local";
    case Method::NonlocalGradient: return "nonlocal-gradient";
    case Method::Ifenn: return "ifenn";
  }
  return "?";
}

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  if (name == "single-notch") {
    // Lemaitre strain, original Mazars, l_c = 4 mm, tol = 1e-6.
    cfg.solver.l_c = 4.0;
    cfg.solver.tol = 1e-6;
    cfg.solver.snapshot_lfs = {0.42, 0.70, 0.82};
  } else if (name == "double-notch") {
    cfg.materials.measure = {StrainVariant::ModifiedVonMises, 10.0};
    cfg.materials.damage = {DamageLaw::MazarsModified, 0.99, 400.0, 1.0e-4};
    cfg.solver.l_c = 2.0;
    cfg.solver.tol = 1e-4;
    cfg.solver.snapshot_lfs = {0.45, 0.70};
  } else if (name == "l-shape") {
    cfg.materials.measure = {StrainVariant::ModifiedVonMises, 10.0};
    cfg.materials.damage = {DamageLaw::MazarsModified, 0.99, 350.0, 1.0e-4};
    cfg.solver.l_c = 5.0;
    cfg.solver.tol = 1e-4;
    cfg.solver.snapshot_lfs = {0.25, 0.50, 0.75};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return cfg;
}

MeshPreset mesh_preset(const std::string& name) {
  MeshPreset p;
  p.kind = name;
  if (name == "single-notch") {
    // Upper half of the mode-I specimen; notch and load approximate the
    // figure-only dimensions and are overridable.
    p.width = 100.0;
    p.height = 100.0;
    p.nx = p.ny = 50;
    p.notch = 40.0;
    p.load = 0.012;
  } else if (name == "double-notch") {
    p.width = 60.0;
    p.height = 125.0;
    p.nx = 24;
    p.ny = 50;
    p.notch = 10.0;
    p.load = 0.0125;
  } else if (name == "l-shape") {
    p.width = p.height = 100.0;
    p.nx = p.ny = 10;  // elements per half-side
    p.notch = 0.0;
    p.load = 0.3;
  } else {
    throw ConfigError("unknown mesh preset '" + name + "'");
  }
  return p;
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");

  std::string line, section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("malformed section header (line " + std::to_string(lineno) + ")");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "mesh" && section != "material" && section != "solver" &&
          section != "train" && section != "paths")
        throw ConfigError("unknown section [" + section + "] (line " + std::to_string(lineno) + ")");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value' (line " + std::to_string(lineno) + ")");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("key '" + key + "' outside any section (line " + std::to_string(lineno) + ")");

    auto unknown = [&]() {
      throw ConfigError("unknown key '" + key + "' in section [" + section + "] (line " +
                        std::to_string(lineno) + ")");
    };

    if (section == "mesh") {
      if (key == "path")
        cfg.mesh_path = val;
      else
        unknown();
    } else if (section == "material") {
      if (key == "G")
        cfg.materials.elastic.G = to_double(val, lineno);
      else if (key == "nu")
        cfg.materials.elastic.nu = to_double(val, lineno);
      else if (key == "strain") {
        if (val == "lemaitre")
          cfg.materials.measure.variant = StrainVariant::Lemaitre;
        else if (val == "modified-von-mises")
          cfg.materials.measure.variant = StrainVariant::ModifiedVonMises;
        else
          throw ConfigError("strain must be lemaitre|modified-von-mises (line " +
                            std::to_string(lineno) + ")");
      } else if (key == "k")
        cfg.materials.measure.k = to_double(val, lineno);
      else if (key == "damage") {
        if (val == "mazars-original")
          cfg.materials.damage.law = DamageLaw::MazarsOriginal;
        else if (val == "mazars-modified")
          cfg.materials.damage.law = DamageLaw::MazarsModified;
        else
          throw ConfigError("damage must be mazars-original|mazars-modified (line " +
                            std::to_string(lineno) + ")");
      } else if (key == "alpha")
        cfg.materials.damage.alpha = to_double(val, lineno);
      else if (key == "beta")
        cfg.materials.damage.beta = to_double(val, lineno);
      else if (key == "eps_d")
        cfg.materials.damage.eps_d = to_double(val, lineno);
      else
        unknown();
    } else if (section == "solver") {
      if (key == "method")
        cfg.solver.method = parse_method(val);
      else if (key == "tol")
        cfg.solver.tol = to_double(val, lineno);
      else if (key == "max_iter")
        cfg.solver.max_iter = to_int(val, lineno);
      else if (key == "n_increments")
        cfg.solver.n_increments = to_int(val, lineno);
      else if (key == "step_reduction")
        cfg.solver.step_reduction = to_double(val, lineno);
      else if (key == "max_halvings")
        cfg.solver.max_halvings = to_int(val, lineno);
      else if (key == "l_c")
        cfg.solver.l_c = to_double(val, lineno);
      else if (key == "snapshots") {
        cfg.solver.snapshot_lfs.clear();
        for (const auto& s : split_list(val)) cfg.solver.snapshot_lfs.push_back(to_double(s, lineno));
      } else
        unknown();
    } else if (section == "train") {
      if (key == "epochs")
        cfg.train.epochs = to_int(val, lineno);
      else if (key == "learning_rate")
        cfg.train.learning_rate = to_double(val, lineno);
      else if (key == "beta1")
        cfg.train.beta1 = to_double(val, lineno);
      else if (key == "beta2")
        cfg.train.beta2 = to_double(val, lineno);
      else if (key == "eps_hat")
        cfg.train.eps_hat = to_double(val, lineno);
      else if (key == "lbfgs")
        cfg.train.lbfgs_enabled = to_bool(val, lineno);
      else if (key == "lbfgs_memory")
        cfg.train.lbfgs_memory = to_int(val, lineno);
      else if (key == "lbfgs_max_steps")
        cfg.train.lbfgs_max_steps = to_int(val, lineno);
      else if (key == "lbfgs_grad_tol")
        cfg.train.lbfgs_grad_tol = to_double(val, lineno);
      else if (key == "seed")
        cfg.train.seed = static_cast<std::uint64_t>(to_int(val, lineno));
      else if (key == "layers") {
        cfg.hidden_layers.clear();
        for (const auto& s : split_list(val)) cfg.hidden_layers.push_back(to_int(s, lineno));
      } else if (key == "scale_exp")
        cfg.scale_exp = to_int(val, lineno);
      else if (key == "with_lf")
        cfg.with_lf = to_bool(val, lineno);
      else
        unknown();
    } else if (section == "paths") {
      if (key == "weights")
        cfg.weights_path = val;
      else if (key == "output")
        cfg.output_dir = val;
      else
        unknown();
    }
  }

  validate_config(cfg);
}

void validate_config(const RunConfig& cfg) {
  if (!(cfg.solver.tol > 0.0 && cfg.solver.tol < 1.0)) throw ConfigError("tol must be in (0, 1)");
  if (cfg.solver.max_iter < 2) throw ConfigError("max_iter must be >= 2");
  if (cfg.solver.n_increments < 1) throw ConfigError("n_increments must be >= 1");
  if (!(cfg.solver.step_reduction > 0.0 && cfg.solver.step_reduction < 1.0))
    throw ConfigError("step_reduction must be in (0, 1)");
  if (cfg.train.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (cfg.train.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(cfg.materials.elastic.G > 0.0)) throw ConfigError("G must be positive");
  if (!(cfg.materials.elastic.nu >= 0.0 && cfg.materials.elastic.nu < 0.5))
    throw ConfigError("nu must be in [0, 0.5)");
  if (cfg.materials.measure.k < 1.0) throw ConfigError("k must be >= 1");
  if (!(cfg.materials.damage.alpha > 0.0 && cfg.materials.damage.alpha <= 1.0))
    throw ConfigError("alpha must be in (0, 1]");
  if (cfg.materials.damage.beta <= 0.0) throw ConfigError("beta must be positive");
  if (cfg.materials.damage.eps_d <= 0.0) throw ConfigError("eps_d must be positive");
  for (int h : cfg.hidden_layers)
    if (h < 1) throw ConfigError("hidden layer widths must be positive");
}

}  // namespace ifenn
