#pragma once

#include <string>
#include <vector>

#include "ifenn/fem_core.hpp"
#include "ifenn/pinn.hpp"
#include "ifenn/solver.hpp"

namespace ifenn {

/// Everything a run needs, loadable from a sectioned key=value file.
/// Unknown sections or keys are rejected.
struct RunConfig {
  std::string mesh_path;

  Materials materials{ElasticParams{125000.0, 0.2},
                      StrainMeasure{StrainVariant::Lemaitre, 10.0},
                      DamageParams{DamageLaw::MazarsOriginal, 0.7, 1.0e4, 1.0e-4}};

  SolverConfig solver;

  TrainConfig train;
  std::vector<int> hidden_layers{30, 30, 30, 30, 30, 30};
  int scale_exp = 2;
  bool with_lf = false;

  std::string weights_path;
  std::string output_dir = "out";
};

/// Built-in benchmark parameter sets; geometry defaults live in MeshPreset.
RunConfig preset_config(const std::string& name);

/// Parses and validates a config file into cfg (file values override the
/// current contents, so presets go first). Throws ConfigError.
void load_config_file(RunConfig& cfg, const std::string& path);

/// Range checks shared by file loading and flag overrides.
void validate_config(const RunConfig& cfg);

struct MeshPreset {
  double width = 100.0, height = 100.0;
  int nx = 50, ny = 50;
  double notch = 0.0;
  double load = 1.0;           // prescribed displacement per unit loadfactor (mm)
  std::string kind = "single-notch";
};

MeshPreset mesh_preset(const std::string& name);

Method parse_method(const std::string& s);
const char* method_name(Method m);

}  // namespace ifenn
