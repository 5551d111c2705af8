#include "birduod/models/config.hpp"

#include "birduod/error.hpp"

namespace birduod::models {

std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::cae: return "cae";
        case ModelKind::cvae: return "cvae";
        case ModelKind::vade: return "vade";
    }
    return "cae";
}

ModelKind model_kind_from_string(std::string_view s) {
    if (s == "cae") return ModelKind::cae;
    if (s == "cvae") return ModelKind::cvae;
    if (s == "vade") return ModelKind::vade;
    throw UsageError("unknown model kind '" + std::string(s) + "' (expected cae, cvae or vade)");
}

void ModelConfig::validate() const {
    if (latent_dim < 2) throw UsageError("latent_dim must be >= 2");
    if (n_gmm_components < 1) throw UsageError("n_gmm_components must be >= 1");
    if (kernel != 3 || stride != 2) throw UsageError("trunk supports 3x3 kernels with stride 2 only");
    for (int c : conv_channels) {
        if (c < 1) throw UsageError("conv_channels must be positive");
    }
    if (input_height < 1 || input_width < 1) throw UsageError("input shape must be positive");
    if (epochs < 0 || pretrain_epochs < 0) throw UsageError("epochs must be non-negative");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw UsageError("learning_rate must be positive");
    if (!(gmm_variance_floor > 0)) throw UsageError("gmm_variance_floor must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"model_kind", to_string(c.model_kind)},
                       {"latent_dim", c.latent_dim},
                       {"conv_channels", c.conv_channels},
                       {"kernel", c.kernel},
                       {"stride", c.stride},
                       {"input_height", c.input_height},
                       {"input_width", c.input_width},
                       {"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"learning_rate", c.learning_rate},
                       {"seed", c.seed},
                       {"input_scale", c.input_scale},
                       {"kl_weight", c.kl_weight},
                       {"n_gmm_components", c.n_gmm_components},
                       {"pretrain_epochs", c.pretrain_epochs},
                       {"gmm_variance_floor", c.gmm_variance_floor}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    const ModelConfig d;
    c.model_kind = model_kind_from_string(j.value("model_kind", std::string(to_string(d.model_kind))));
    c.latent_dim = j.value("latent_dim", d.latent_dim);
    c.conv_channels = j.value("conv_channels", d.conv_channels);
    c.kernel = j.value("kernel", d.kernel);
    c.stride = j.value("stride", d.stride);
    c.input_height = j.value("input_height", d.input_height);
    c.input_width = j.value("input_width", d.input_width);
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.seed = j.value("seed", d.seed);
    c.input_scale = j.value("input_scale", d.input_scale);
    c.kl_weight = j.value("kl_weight", d.kl_weight);
    c.n_gmm_components = j.value("n_gmm_components", d.n_gmm_components);
    c.pretrain_epochs = j.value("pretrain_epochs", d.pretrain_epochs);
    c.gmm_variance_floor = j.value("gmm_variance_floor", d.gmm_variance_floor);
}

}  // namespace birduod::models
