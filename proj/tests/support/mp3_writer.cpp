#include "mp3_writer.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

extern "C" {
#include <libavcodec/avcodec.h>
#include <libavformat/avformat.h>
#include <libavutil/channel_layout.h>
}

namespace birduod::testing {

namespace {

void check(int rc, const char* what) {
    if (rc < 0) throw std::runtime_error(std::string("mp3 writer: ") + what + " failed");
}

void drain(AVCodecContext* enc, AVFormatContext* fmt, AVStream* st, AVPacket* pkt) {
    while (avcodec_receive_packet(enc, pkt) == 0) {
        av_packet_rescale_ts(pkt, enc->time_base, st->time_base);
        pkt->stream_index = st->index;
        check(av_interleaved_write_frame(fmt, pkt), "write frame");
    }
}

}  // namespace

void write_mp3(const std::filesystem::path& path, std::span<const float> samples, int sample_rate) {
    const AVCodec* codec = avcodec_find_encoder_by_name("libmp3lame");
    if (!codec) throw std::runtime_error("mp3 writer: libmp3lame unavailable");
    AVFormatContext* fmt = nullptr;
    check(avformat_alloc_output_context2(&fmt, nullptr, "mp3", path.c_str()), "alloc output");
    AVStream* st = avformat_new_stream(fmt, nullptr);
    AVCodecContext* enc = avcodec_alloc_context3(codec);
    enc->sample_rate = sample_rate;
    enc->sample_fmt = AV_SAMPLE_FMT_FLTP;
    enc->bit_rate = 128000;
    enc->channel_layout = AV_CH_LAYOUT_MONO;
    enc->channels = 1;
    enc->time_base = AVRational{1, sample_rate};
    check(avcodec_open2(enc, codec, nullptr), "open encoder");
    check(avcodec_parameters_from_context(st->codecpar, enc), "stream parameters");
    st->time_base = enc->time_base;
    check(avio_open(&fmt->pb, path.c_str(), AVIO_FLAG_WRITE), "open file");
    check(avformat_write_header(fmt, nullptr), "write header");

    AVFrame* frame = av_frame_alloc();
    AVPacket* pkt = av_packet_alloc();
    const int frame_size = enc->frame_size;
    int64_t pts = 0;
    for (size_t at = 0; at < samples.size(); at += static_cast<size_t>(frame_size)) {
        const int n = static_cast<int>(std::min<size_t>(static_cast<size_t>(frame_size), samples.size() - at));
        frame->nb_samples = frame_size;
        frame->format = enc->sample_fmt;
        frame->sample_rate = sample_rate;
        frame->channel_layout = AV_CH_LAYOUT_MONO;
        frame->channels = 1;
        check(av_frame_get_buffer(frame, 0), "frame buffer");
        auto* dst = reinterpret_cast<float*>(frame->data[0]);
        std::fill(dst, dst + frame_size, 0.0f);
        std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(at), n, dst);
        frame->nb_samples = n == frame_size ? frame_size : n;
        frame->pts = pts;
        pts += n;
        check(avcodec_send_frame(enc, frame), "send frame");
        drain(enc, fmt, st, pkt);
        av_frame_unref(frame);
    }
    check(avcodec_send_frame(enc, nullptr), "flush");
    drain(enc, fmt, st, pkt);
    check(av_write_trailer(fmt), "trailer");
    avio_closep(&fmt->pb);
    av_packet_free(&pkt);
    av_frame_free(&frame);
    avcodec_free_context(&enc);
    avformat_free_context(fmt);
}

}  // namespace birduod::testing
