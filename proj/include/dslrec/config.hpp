#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dslrec/data.hpp"
#include "dslrec/loss.hpp"
#include "dslrec/model.hpp"

namespace dslrec {

enum class LossKind { BPR, SL, DSL, DSLKappaOnly, DSLCAOnly };
std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

/// Everything needed to reproduce one training run. Loss-specific fields are
/// carried but ignored by losses that do not use them.
struct ExperimentConfig {
  std::string data_path;
  std::string delimiter = "auto";
  std::string header = "auto";
  SplitKind split = SplitKind::IID;
  std::uint64_t split_seed = 1;

  Backbone backbone{BackboneKind::MF, 2};
  LossKind loss = LossKind::DSL;
  DSLConfig dsl;

  std::size_t dim = 64;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  std::size_t batch_size = 1024;
  std::size_t epochs = 50;
  std::size_t patience = 10;  // epochs without validation improvement
  std::size_t negatives = 200;
  std::size_t eval_k = 20;
  std::uint64_t seed = 1;
  std::size_t log_interval = 10;  // batches between diagnostics rows
  bool write_manifest = false;

  // Tunable field name -> candidate values.
  std::map<std::string, std::vector<double>> grid;

  /// Branch toggles follow the loss name.
  DSLConfig effective_dsl() const;

  void set(const std::string& key, const std::string& value);
  /// Resolved key=value pairs in a fixed order; grids appear as grid.<key>.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string serialize() const;
  void validate() const;

  static const std::vector<std::string>& keys();
  static const std::vector<std::string>& tunable_keys();
};

/// Flat key=value lines; '#' starts a comment.
ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});
void save_config_file(const ExperimentConfig& config, const std::filesystem::path& path);

std::string format_double(double v);
std::vector<double> parse_double_list(const std::string& text);

}  // namespace dslrec
