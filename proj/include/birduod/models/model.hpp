#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "birduod/models/autoencoder.hpp"
#include "birduod/models/config.hpp"
#include "birduod/models/gmm.hpp"
#include "birduod/preprocess/mel.hpp"

namespace birduod::models {

struct LatentCode {
    std::string clip_id;
    Eigen::VectorXd z;
    Eigen::VectorXd mu;       // cvae/vade only
    Eigen::VectorXd log_var;  // cvae/vade only
};

/// Mean squared error over every pixel of every clip. Throws on an empty batch
/// or mismatched shapes.
double reconstruction_loss(const std::vector<preprocess::Spectrogram>& input,
                           const std::vector<preprocess::Spectrogram>& output);

struct EpochStats {
    int epoch = 0;
    std::string phase;  // "pretrain" or "train"
    double loss = 0.0;
    double reconstruction = 0.0;
    double regularizer = 0.0;
};

using ProgressFn = std::function<void(const EpochStats&)>;

class TrainedModel {
public:
    /// An initialized but untrained network.
    explicit TrainedModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    /// Evaluation-mode encoding; variational kinds return z == mu.
    LatentCode encode(const preprocess::Spectrogram& mel, std::string clip_id = {}) const;
    std::vector<LatentCode> encode_all(const std::vector<preprocess::Spectrogram>& clips,
                                       const std::vector<std::string>& ids = {}) const;
    /// Codes as an n x latent_dim matrix.
    Eigen::MatrixXd latent_matrix(const std::vector<preprocess::Spectrogram>& clips) const;

    /// Maps a latent vector back to a clip in input units.
    preprocess::Spectrogram decode(const Eigen::VectorXd& z) const;
    preprocess::Spectrogram reconstruct(const preprocess::Spectrogram& mel) const;

    /// MSE between the scaled input and its reconstruction.
    double reconstruction_loss(const std::vector<preprocess::Spectrogram>& batch) const;

    const std::optional<GmmParams>& gmm() const { return gmm_; }
    const std::vector<EpochStats>& loss_curve() const { return curve_; }

    void save(const std::filesystem::path& ckpt) const;
    static TrainedModel load(const std::filesystem::path& ckpt);

    ConvAutoencoder<float>& network() { return net_; }

private:
    friend TrainedModel train(const std::vector<preprocess::Spectrogram>&, const ModelConfig&, const ProgressFn&);

    Matrix<float> to_input(const std::vector<preprocess::Spectrogram>& clips, size_t begin, size_t end) const;

    ModelConfig cfg_;
    ConvAutoencoder<float> net_;
    std::optional<GmmParams> gmm_;
    std::vector<EpochStats> curve_;
};

/// Trains one model. Deterministic given cfg.seed. Throws NumericalError on
/// a non-finite loss and UsageError on fewer clips than batch_size or a clip
/// of the wrong shape.
TrainedModel train(const std::vector<preprocess::Spectrogram>& clips, const ModelConfig& cfg,
                   const ProgressFn& progress = {});

/// `models/<kind>_<seed>.ckpt`
std::filesystem::path checkpoint_path(const std::filesystem::path& models_dir, ModelKind kind, uint64_t seed);

/// Writes the checkpoint and its JSON sidecar (config plus loss curve).
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& ckpt);

void write_latent_csv(const std::filesystem::path& path, const std::vector<LatentCode>& codes);

}  // namespace birduod::models
