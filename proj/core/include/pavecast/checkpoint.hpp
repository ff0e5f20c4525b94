#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pavecast/baselines.hpp"
#include "pavecast/tensor.hpp"
#include "pavecast/transformer.hpp"
#include "pavecast/windows.hpp"

namespace pavecast {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Versioned textual checkpoint container shared by every model kind.
// Doubles are serialized as hexfloats, so a save/load round trip is
// bit-exact.
struct Checkpoint {
    std::string kind;  // model-kind tag, e.g. "transformer", "forest"
    std::map<std::string, std::string> strings;
    std::map<std::string, double> scalars;
    std::vector<std::pair<std::string, Matrix>> matrices;  // ordered

    const Matrix& matrix(const std::string& name) const;
    double scalar(const std::string& name) const;

    std::string serialize() const;
    static Checkpoint parse(const std::string& text);

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

// A fitted model of any kind plus the scaler it expects its inputs to be
// standardized with.
struct SavedModel {
    Checkpoint checkpoint;

    // Predicts on unscaled window samples: applies the stored scaler, then
    // dispatches on the model kind.
    std::vector<double> predict(const std::vector<WindowSample>& windows) const;

    int window_length() const;
    int feature_count() const;
};

Checkpoint checkpoint_transformer(const TransformerConfig& cfg, const TransformerParams& params,
                                  const Scaler& scaler);
Checkpoint checkpoint_linear(const std::string& kind_tag, const LinearModel& model,
                             const Scaler& scaler, int window_length);
Checkpoint checkpoint_knn(const KnnModel& model, const Scaler& scaler, int window_length);
Checkpoint checkpoint_tree(const TreeNode& root, const Scaler& scaler, int window_length,
                           int feature_count);
Checkpoint checkpoint_forest(const Forest& forest, const Scaler& scaler, int window_length,
                             int feature_count);
Checkpoint checkpoint_gbt(const BoostedModel& model, const Scaler& scaler, int window_length,
                          int feature_count);
Checkpoint checkpoint_mlp(const MlpModel& model, const Scaler& scaler, int window_length);

// Restores the transformer pieces out of a checkpoint.
void restore_transformer(const Checkpoint& cp, TransformerConfig& cfg, TransformerParams& params);
Scaler restore_scaler(const Checkpoint& cp);

}  // namespace pavecast
