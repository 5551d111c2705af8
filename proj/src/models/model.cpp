#include "birduod/models/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "birduod/error.hpp"
#include "birduod/io.hpp"

namespace birduod::models {

namespace {

constexpr char kMagic[8] = {'B', 'U', 'O', 'D', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void check_shape(const ModelConfig& cfg, const preprocess::Spectrogram& mel) {
    if (mel.rows() != cfg.input_height || mel.cols() != cfg.input_width) {
        throw UsageError(fmt::format("clip shape {}x{} does not match model input {}x{}", mel.rows(), mel.cols(),
                                     cfg.input_height, cfg.input_width));
    }
}

Matrix<float> gather(const Matrix<float>& data, const std::vector<Eigen::Index>& order, size_t begin, size_t end) {
    Matrix<float> out(data.rows(), static_cast<Eigen::Index>(end - begin));
    for (size_t i = begin; i < end; ++i) out.col(static_cast<Eigen::Index>(i - begin)) = data.col(order[i]);
    return out;
}

Matrix<float> gaussian_noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Matrix<float> eps(rows, cols);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = dist(rng);
    return eps;
}

nlohmann::json curve_json(const std::vector<EpochStats>& curve) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : curve) {
        arr.push_back({{"epoch", e.epoch},
                       {"phase", e.phase},
                       {"loss", e.loss},
                       {"reconstruction", e.reconstruction},
                       {"regularizer", e.regularizer}});
    }
    return arr;
}

}  // namespace

double reconstruction_loss(const std::vector<preprocess::Spectrogram>& input,
                           const std::vector<preprocess::Spectrogram>& output) {
    if (input.empty()) throw UsageError("reconstruction_loss: empty batch");
    if (input.size() != output.size()) throw UsageError("reconstruction_loss: batch sizes differ");
    double sum = 0.0;
    double count = 0.0;
    for (size_t i = 0; i < input.size(); ++i) {
        if (input[i].rows() != output[i].rows() || input[i].cols() != output[i].cols()) {
            throw UsageError("reconstruction_loss: clip shapes differ");
        }
        sum += (input[i].cast<double>() - output[i].cast<double>()).squaredNorm();
        count += static_cast<double>(input[i].size());
    }
    return sum / count;
}

TrainedModel::TrainedModel(const ModelConfig& cfg) : cfg_(cfg), net_(cfg, cfg.model_kind != ModelKind::cae) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    net_.init(rng);
}

Matrix<float> TrainedModel::to_input(const std::vector<preprocess::Spectrogram>& clips, size_t begin,
                                     size_t end) const {
    const float scale = static_cast<float>(cfg_.input_scale);
    Matrix<float> x(net_.pixels(), static_cast<Eigen::Index>(end - begin));
    for (size_t i = begin; i < end; ++i) {
        check_shape(cfg_, clips[i]);
        x.col(static_cast<Eigen::Index>(i - begin)) =
            Eigen::Map<const Vector<float>>(clips[i].data(), clips[i].size()) * scale;
    }
    return x;
}

LatentCode TrainedModel::encode(const preprocess::Spectrogram& mel, std::string clip_id) const {
    auto codes = encode_all({mel}, {std::move(clip_id)});
    return std::move(codes.front());
}

std::vector<LatentCode> TrainedModel::encode_all(const std::vector<preprocess::Spectrogram>& clips,
                                                 const std::vector<std::string>& ids) const {
    if (!ids.empty() && ids.size() != clips.size()) throw UsageError("encode_all: id count differs from clip count");
    std::vector<LatentCode> out;
    out.reserve(clips.size());
    constexpr size_t kChunk = 256;
    for (size_t begin = 0; begin < clips.size(); begin += kChunk) {
        const size_t end = std::min(clips.size(), begin + kChunk);
        const auto enc = net_.encode(to_input(clips, begin, end), false);
        for (size_t i = begin; i < end; ++i) {
            const auto c = static_cast<Eigen::Index>(i - begin);
            LatentCode code;
            if (!ids.empty()) code.clip_id = ids[i];
            code.z = enc.mu.col(c).cast<double>();
            if (net_.variational()) {
                code.mu = code.z;
                code.log_var = enc.log_var.col(c).cast<double>();
            }
            out.push_back(std::move(code));
        }
    }
    return out;
}

Eigen::MatrixXd TrainedModel::latent_matrix(const std::vector<preprocess::Spectrogram>& clips) const {
    const auto codes = encode_all(clips);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(codes.size()), cfg_.latent_dim);
    for (size_t i = 0; i < codes.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = codes[i].z.transpose();
    return m;
}

preprocess::Spectrogram TrainedModel::decode(const Eigen::VectorXd& z) const {
    if (z.size() != cfg_.latent_dim) throw UsageError("decode: latent dimension mismatch");
    const Matrix<float> y = net_.decode(z.cast<float>(), false);
    preprocess::Spectrogram out(cfg_.input_height, cfg_.input_width);
    Eigen::Map<Vector<float>>(out.data(), out.size()) = y.col(0) / static_cast<float>(cfg_.input_scale);
    return out;
}

preprocess::Spectrogram TrainedModel::reconstruct(const preprocess::Spectrogram& mel) const {
    return decode(encode(mel).z);
}

double TrainedModel::reconstruction_loss(const std::vector<preprocess::Spectrogram>& batch) const {
    if (batch.empty()) throw UsageError("reconstruction_loss: empty batch");
    const Matrix<float> x = to_input(batch, 0, batch.size());
    const Matrix<float> y = net_.decode(net_.encode(x, false).mu, false);
    return (x.cast<double>() - y.cast<double>()).squaredNorm() / static_cast<double>(x.size());
}

TrainedModel train(const std::vector<preprocess::Spectrogram>& clips, const ModelConfig& cfg,
                   const ProgressFn& progress) {
    cfg.validate();
    if (clips.size() < static_cast<size_t>(cfg.batch_size)) {
        throw UsageError(fmt::format("train needs at least batch_size={} clips, got {}", cfg.batch_size, clips.size()));
    }
    TrainedModel model(cfg);
    auto& net = model.net_;
    const Matrix<float> data = model.to_input(clips, 0, clips.size());
    const size_t n = clips.size();
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    auto run_epochs = [&](int epochs, const std::string& phase, std::vector<Param<float>*> params, auto&& step) {
        Adam<float> opt(params, cfg.learning_rate);
        for (int epoch = 0; epoch < epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            EpochStats stats;
            stats.epoch = epoch;
            stats.phase = phase;
            for (size_t begin = 0; begin < n; begin += static_cast<size_t>(cfg.batch_size)) {
                const size_t end = std::min(n, begin + static_cast<size_t>(cfg.batch_size));
                const Matrix<float> x = gather(data, order, begin, end);
                opt.zero_grad();
                const StepLoss<float> loss = step(x);
                if (!std::isfinite(loss.total)) {
                    throw NumericalError(fmt::format("{} {}: non-finite loss at epoch {} (batch starting at {})",
                                                     to_string(cfg.model_kind), phase, epoch, begin));
                }
                opt.step();
                const double w = static_cast<double>(end - begin) / static_cast<double>(n);
                stats.loss += w * loss.total;
                stats.reconstruction += w * loss.reconstruction;
                stats.regularizer += w * loss.regularizer;
            }
            model.curve_.push_back(stats);
            if (progress) progress(stats);
        }
    };

    switch (cfg.model_kind) {
        case ModelKind::cae:
            run_epochs(cfg.epochs, "train", net.params(), [&](const Matrix<float>& x) { return cae_step(net, x); });
            break;
        case ModelKind::cvae: {
            const auto kl_weight = static_cast<float>(cfg.kl_weight);
            run_epochs(cfg.epochs, "train", net.params(), [&](const Matrix<float>& x) {
                const Matrix<float> eps = gaussian_noise(cfg.latent_dim, x.cols(), rng);
                return cvae_step(net, x, eps, kl_weight);
            });
            break;
        }
        case ModelKind::vade: {
            std::vector<Param<float>*> trunk = net.params();
            run_epochs(cfg.pretrain_epochs, "pretrain", trunk, [&](const Matrix<float>& x) { return cae_step(net, x); });

            if (n < static_cast<size_t>(cfg.n_gmm_components)) {
                throw UsageError(fmt::format("VaDE needs at least n_gmm_components={} clips", cfg.n_gmm_components));
            }
            EmOptions em;
            em.variance_floor = cfg.gmm_variance_floor;
            em.n_init = 10;
            const EmResult init = fit_gmm_em(model.latent_matrix(clips), cfg.n_gmm_components, cfg.seed, em);

            GmmPrior<float> prior;
            prior.from_params(init.params);
            // Start q(z|x) narrow relative to the fitted components.
            auto& lv = net.log_var_head();
            lv.weight().value *= 0.01f;
            const Eigen::VectorXd mean_var = init.params.variances.colwise().mean().transpose();
            lv.bias().value.col(0) = (mean_var.array() * 0.1).log().cast<float>().matrix();

            std::vector<Param<float>*> all = trunk;
            for (auto* p : prior.params()) all.push_back(p);
            bool floored = false;
            run_epochs(cfg.epochs, "train", all, [&](const Matrix<float>& x) {
                const Matrix<float> eps = gaussian_noise(cfg.latent_dim, x.cols(), rng);
                floored = prior.clamp_variances(cfg.gmm_variance_floor) || floored;
                return vade_step(net, prior, x, eps);
            });
            floored = prior.clamp_variances(cfg.gmm_variance_floor) || floored;
            if (floored || init.variance_floored) {
                spdlog::warn("VaDE GMM variance collapse: floored at {}", cfg.gmm_variance_floor);
            }
            model.gmm_ = prior.to_params();
            break;
        }
    }
    return model;
}

void TrainedModel::save(const std::filesystem::path& ckpt) const {
    nlohmann::json header{{"config", cfg_}, {"loss_curve", curve_json(curve_)}};
    if (gmm_) header["gmm"] = *gmm_;
    const std::string h = header.dump();

    std::ostringstream out(std::ios::binary);
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    const uint64_t hlen = h.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    auto params = const_cast<ConvAutoencoder<float>&>(net_).params();
    const uint64_t count = params.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto* p : params) {
        const int64_t dims[2] = {p->value.rows(), p->value.cols()};
        out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(sizeof(float) * p->value.size()));
    }
    io::write_text_atomic(ckpt, out.str());
}

TrainedModel TrainedModel::load(const std::filesystem::path& ckpt) {
    const std::string bytes = io::read_text(ckpt);
    size_t pos = 0;
    auto take = [&](void* dst, size_t len) {
        if (pos + len > bytes.size()) throw DataError("truncated checkpoint " + ckpt.string());
        std::memcpy(dst, bytes.data() + pos, len);
        pos += len;
    };
    char magic[8];
    take(magic, sizeof(magic));
    uint32_t version = 0;
    take(&version, sizeof(version));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0 || version != kVersion) {
        throw DataError("not a model checkpoint: " + ckpt.string());
    }
    uint64_t hlen = 0;
    take(&hlen, sizeof(hlen));
    if (pos + hlen > bytes.size()) throw DataError("truncated checkpoint " + ckpt.string());
    const auto header = nlohmann::json::parse(bytes.substr(pos, hlen));
    pos += hlen;

    TrainedModel model(header.at("config").get<ModelConfig>());
    if (header.contains("gmm")) model.gmm_ = header.at("gmm").get<GmmParams>();
    for (const auto& e : header.at("loss_curve")) {
        model.curve_.push_back({e.at("epoch").get<int>(), e.at("phase").get<std::string>(), e.at("loss").get<double>(),
                                e.at("reconstruction").get<double>(), e.at("regularizer").get<double>()});
    }
    auto params = model.net_.params();
    uint64_t count = 0;
    take(&count, sizeof(count));
    if (count != params.size()) throw DataError("checkpoint parameter count mismatch: " + ckpt.string());
    for (auto* p : params) {
        int64_t dims[2];
        take(dims, sizeof(dims));
        if (dims[0] != p->value.rows() || dims[1] != p->value.cols()) {
            throw DataError("checkpoint tensor shape mismatch: " + ckpt.string());
        }
        take(p->value.data(), sizeof(float) * static_cast<size_t>(p->value.size()));
    }
    return model;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& models_dir, ModelKind kind, uint64_t seed) {
    return models_dir / fmt::format("{}_{}.ckpt", to_string(kind), seed);
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& ckpt) {
    std::filesystem::create_directories(ckpt.parent_path());
    model.save(ckpt);
    nlohmann::json side{{"checkpoint", ckpt.filename().string()},
                        {"config", model.config()},
                        {"loss_curve", curve_json(model.loss_curve())}};
    if (!model.loss_curve().empty()) side["final_loss"] = model.loss_curve().back().loss;
    if (model.gmm()) side["gmm"] = *model.gmm();
    auto sidecar = ckpt;
    sidecar.replace_extension(".json");
    io::write_text_atomic(sidecar, io::dump_json(side));
}

void write_latent_csv(const std::filesystem::path& path, const std::vector<LatentCode>& codes) {
    std::string out = "clip_id";
    const auto d = codes.empty() ? 0 : codes.front().z.size();
    for (Eigen::Index j = 0; j < d; ++j) out += fmt::format(",z_{}", j);
    out += '\n';
    for (const auto& c : codes) {
        out += c.clip_id;
        for (Eigen::Index j = 0; j < c.z.size(); ++j) out += fmt::format(",{:.9g}", c.z[j]);
        out += '\n';
    }
    io::write_text_atomic(path, out);
}

}  // namespace birduod::models
