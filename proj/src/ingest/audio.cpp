#include "birduod/ingest/audio.hpp"

extern "C" {
#include <libavcodec/avcodec.h>
#include <libavformat/avformat.h>
#include <libavutil/channel_layout.h>
#include <libavutil/opt.h>
#include <libswresample/swresample.h>
}

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "birduod/error.hpp"
#include "birduod/io.hpp"

namespace birduod::ingest {

namespace {

struct FormatCloser {
    void operator()(AVFormatContext* ctx) const { avformat_close_input(&ctx); }
};
struct CodecFreer {
    void operator()(AVCodecContext* ctx) const { avcodec_free_context(&ctx); }
};
struct SwrFreer {
    void operator()(SwrContext* ctx) const { swr_free(&ctx); }
};
struct FrameFreer {
    void operator()(AVFrame* f) const { av_frame_free(&f); }
};
struct PacketFreer {
    void operator()(AVPacket* p) const { av_packet_free(&p); }
};

std::string av_error(int code) {
    char buf[AV_ERROR_MAX_STRING_SIZE] = {};
    av_strerror(code, buf, sizeof buf);
    return buf;
}

class Decoder {
public:
    explicit Decoder(const std::filesystem::path& path) : path_(path.string()) {
        AVFormatContext* raw = nullptr;
        if (int rc = avformat_open_input(&raw, path_.c_str(), nullptr, nullptr); rc < 0) {
            fail("open", rc);
        }
        fmt_.reset(raw);
        if (int rc = avformat_find_stream_info(fmt_.get(), nullptr); rc < 0) fail("stream info", rc);
        stream_ = av_find_best_stream(fmt_.get(), AVMEDIA_TYPE_AUDIO, -1, -1, nullptr, 0);
        if (stream_ < 0) fail("find audio stream", stream_);
        const AVCodecParameters* par = fmt_->streams[stream_]->codecpar;
        const AVCodec* codec = avcodec_find_decoder(par->codec_id);
        if (!codec) throw DataError(path_ + ": no decoder for codec");
        codec_.reset(avcodec_alloc_context3(codec));
        avcodec_parameters_to_context(codec_.get(), par);
        if (int rc = avcodec_open2(codec_.get(), codec, nullptr); rc < 0) fail("open codec", rc);
    }

    Waveform run() {
        std::unique_ptr<AVPacket, PacketFreer> pkt(av_packet_alloc());
        std::unique_ptr<AVFrame, FrameFreer> frame(av_frame_alloc());
        while (av_read_frame(fmt_.get(), pkt.get()) >= 0) {
            if (pkt->stream_index == stream_) {
                if (int rc = avcodec_send_packet(codec_.get(), pkt.get()); rc < 0 && rc != AVERROR(EAGAIN)) {
                    av_packet_unref(pkt.get());
                    fail("decode", rc);
                }
                drain(frame.get());
            }
            av_packet_unref(pkt.get());
        }
        avcodec_send_packet(codec_.get(), nullptr);
        drain(frame.get());
        if (swr_) convert(nullptr, 0);  // flush resampler delay

        Waveform w;
        w.sample_rate = kSampleRate;
        w.samples = std::move(mono_);
        for (auto& s : w.samples) s = std::clamp(s, -1.0f, 1.0f);
        return w;
    }

private:
    [[noreturn]] void fail(const char* what, int code) const {
        throw DataError(path_ + ": " + what + " failed: " + av_error(code));
    }

    void drain(AVFrame* frame) {
        while (true) {
            int rc = avcodec_receive_frame(codec_.get(), frame);
            if (rc == AVERROR(EAGAIN) || rc == AVERROR_EOF) return;
            if (rc < 0) fail("decode", rc);
            ensure_resampler(frame);
            convert(const_cast<const uint8_t**>(frame->extended_data), frame->nb_samples);
            av_frame_unref(frame);
        }
    }

    void ensure_resampler(const AVFrame* frame) {
        if (swr_) return;
        channels_ = frame->channels > 0 ? frame->channels : codec_->channels;
        if (channels_ <= 0) throw DataError(path_ + ": unknown channel count");
        int64_t layout = frame->channel_layout ? static_cast<int64_t>(frame->channel_layout)
                                               : av_get_default_channel_layout(channels_);
        // Keep every channel through the resampler; averaging happens here so
        // the downmix is a plain mean rather than a surround mix matrix.
        SwrContext* swr = swr_alloc_set_opts(nullptr, layout, AV_SAMPLE_FMT_FLTP, kSampleRate, layout,
                                             static_cast<AVSampleFormat>(frame->format), frame->sample_rate, 0,
                                             nullptr);
        if (!swr || swr_init(swr) < 0) {
            if (swr) swr_free(&swr);
            throw DataError(path_ + ": cannot initialise resampler");
        }
        swr_.reset(swr);
        in_rate_ = frame->sample_rate;
    }

    void convert(const uint8_t** in, int in_samples) {
        const int cap = static_cast<int>(av_rescale_rnd(swr_get_delay(swr_.get(), in_rate_) + in_samples,
                                                        kSampleRate, in_rate_, AV_ROUND_UP)) +
                        16;
        planes_.assign(static_cast<size_t>(channels_), std::vector<float>(static_cast<size_t>(cap)));
        std::vector<uint8_t*> out(static_cast<size_t>(channels_));
        for (int c = 0; c < channels_; ++c) out[c] = reinterpret_cast<uint8_t*>(planes_[c].data());
        int got = swr_convert(swr_.get(), out.data(), cap, in, in_samples);
        if (got < 0) fail("resample", got);
        for (int i = 0; i < got; ++i) {
            float acc = 0.0f;
            for (int c = 0; c < channels_; ++c) acc += planes_[c][i];
            mono_.push_back(acc / static_cast<float>(channels_));
        }
    }

    std::string path_;
    std::unique_ptr<AVFormatContext, FormatCloser> fmt_;
    std::unique_ptr<AVCodecContext, CodecFreer> codec_;
    std::unique_ptr<SwrContext, SwrFreer> swr_;
    int stream_ = -1;
    int channels_ = 0;
    int in_rate_ = 0;
    std::vector<std::vector<float>> planes_;
    std::vector<float> mono_;
};

void put_u32(std::string& s, uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform decode_audio(const std::filesystem::path& audio_path) {
    if (!std::filesystem::exists(audio_path)) throw DataError("audio file missing: " + audio_path.string());
    av_log_set_level(AV_LOG_ERROR);
    Decoder dec(audio_path);
    return dec.run();
}

std::string encode_wav_pcm16(std::span<const float> samples, int sample_rate) {
    const auto data_bytes = static_cast<uint32_t>(samples.size() * 2);
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<uint32_t>(sample_rate));
    put_u32(out, static_cast<uint32_t>(sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_bytes);
    for (float s : samples) {
        const float c = std::clamp(s, -1.0f, 1.0f);
        const auto v = static_cast<int16_t>(std::lround(c * 32767.0f));
        put_u16(out, static_cast<uint16_t>(v));
    }
    return out;
}

void write_wav_pcm16(const std::filesystem::path& path, std::span<const float> samples, int sample_rate) {
    io::write_text_atomic(path, encode_wav_pcm16(samples, sample_rate));
}

}  // namespace birduod::ingest
