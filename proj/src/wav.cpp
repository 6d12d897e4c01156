#include "srl/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace srl {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> b) : bytes_(b) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw WavError(std::string("wav: truncated ") + what + " at offset " +
                     std::to_string(pos_));
  }
  std::string tag() {
    need(4, "chunk tag");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return s;
  }
  std::uint32_t u32() {
    need(4, "field");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2, "field");
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  void skip(std::size_t n) {
    need(n, "chunk body");
    pos_ += n;
  }
  const unsigned char* here() const { return bytes_.data() + pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put_tag(std::vector<unsigned char>& out, const char* t) {
  out.insert(out.end(), t, t + 4);
}

}  // namespace

dsp::Waveform parse_wav(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  if (r.tag() != "RIFF") throw WavError("wav: missing RIFF tag at offset 0");
  r.u32();  // riff size; unreliable in practice
  if (r.tag() != "WAVE") throw WavError("wav: missing WAVE tag at offset 8");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (r.remaining() > 0) {
    const std::size_t chunk_at = r.offset();
    const std::string id = r.tag();
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      if (size < 16)
        throw WavError("wav: fmt chunk too short at offset " + std::to_string(chunk_at));
      r.need(size, "fmt chunk");
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      std::size_t consumed = 16;
      if (format == kFormatExtensible && size >= 40) {
        r.u16();  // cb size
        r.u16();  // valid bits
        r.u32();  // channel mask
        format = r.u16();  // first two bytes of the subformat GUID
        consumed += 10;
      }
      r.skip(size - consumed + (size & 1));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt)
        throw WavError("wav: data chunk before fmt at offset " + std::to_string(chunk_at));
      if (format != kFormatPcm && format != kFormatFloat)
        throw WavError("wav: unsupported format tag " + std::to_string(format));
      if (!(format == kFormatPcm && bits == 16) && !(format == kFormatFloat && bits == 32))
        throw WavError("wav: unsupported sample layout, format tag " +
                       std::to_string(format) + " with " + std::to_string(bits) +
                       " bits");
      if (channels == 0 || rate == 0)
        throw WavError("wav: zero channels or sample rate");
      r.need(size, "data chunk");
      const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
      const std::size_t frames = size / frame_bytes;
      dsp::Waveform w{std::vector<double>(frames), static_cast<double>(rate)};
      const unsigned char* p = r.here();
      for (std::size_t i = 0; i < frames; ++i, p += frame_bytes) {
        if (format == kFormatPcm) {
          const auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
          w.samples[i] = static_cast<double>(v) / 32768.0;
        } else {
          std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                            (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) |
                            (static_cast<std::uint32_t>(p[3]) << 24);
          w.samples[i] = static_cast<double>(std::bit_cast<float>(u));
        }
      }
      return w;
    } else {
      r.skip(size + (size & 1));
    }
  }
  throw WavError("wav: no data chunk before end of file at offset " +
                 std::to_string(r.offset()));
}

dsp::Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("wav: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const WavError& e) {
    throw WavError(path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> encode_wav(const dsp::Waveform& w) {
  if (!(w.sample_rate > 0.0)) throw WavError("wav: sample rate must be positive");
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double x : w.samples) {
    const double q = std::round(std::clamp(x, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const dsp::Waveform& w) {
  const auto bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WavError("wav: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WavError("wav: write failed for " + path.string());
}

}  // namespace srl
