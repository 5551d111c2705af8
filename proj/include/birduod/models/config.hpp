#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace birduod::models {

enum class ModelKind { cae, cvae, vade };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

struct ModelConfig {
    ModelKind model_kind = ModelKind::cae;
    int latent_dim = 10;
    std::array<int, 3> conv_channels{16, 32, 64};
    int kernel = 3;
    int stride = 2;
    int input_height = 32;
    int input_width = 40;
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 1e-3;
    uint64_t seed = 0;
    // Clip values are multiplied by this before entering the network.
    double input_scale = 1.0 / 80.0;
    double kl_weight = 1.0;
    // VaDE only.
    int n_gmm_components = 50;
    int pretrain_epochs = 30;
    double gmm_variance_floor = 1e-4;

    /// Throws UsageError when the trunk cannot reproduce the input shape or
    /// a hyperparameter is out of range.
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace birduod::models
