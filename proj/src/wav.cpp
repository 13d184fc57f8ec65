#include <cstring>

#include "tokalign/audio.hpp"
#include "tokalign/io.hpp"

namespace tokalign {

namespace {

uint16_t read_u16(std::istream& is) {
    uint16_t x;
    is.read(reinterpret_cast<char*>(&x), 2);
    if (!is) throw std::runtime_error("wav: unexpected end of file");
    return x;
}

}  // namespace

AudioWave read_wav(const std::string& path) {
    auto is = io::open_in(path);
    char riff[4], wave[4];
    is.read(riff, 4);
    if (!is || std::memcmp(riff, "RIFF", 4) != 0) throw std::runtime_error("wav: not a RIFF file: " + path);
    io::read_u32(is);  // chunk size
    is.read(wave, 4);
    if (!is || std::memcmp(wave, "WAVE", 4) != 0) throw std::runtime_error("wav: not a WAVE file: " + path);

    bool have_fmt = false;
    uint16_t channels = 0, bits = 0, format = 0;
    uint32_t rate = 0;
    AudioWave out;
    while (true) {
        char id[4];
        is.read(id, 4);
        if (!is) break;
        uint32_t size = io::read_u32(is);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw std::runtime_error("wav: malformed fmt chunk");
            format = read_u16(is);
            channels = read_u16(is);
            rate = io::read_u32(is);
            io::read_u32(is);  // byte rate
            read_u16(is);      // block align
            bits = read_u16(is);
            is.ignore(size - 16);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!have_fmt) throw std::runtime_error("wav: data chunk before fmt");
            if (format != 1) throw std::runtime_error("wav: unsupported encoding (PCM only)");
            if (channels != 1) throw std::runtime_error("wav: unsupported channel count (mono only)");
            if (bits != 16) throw std::runtime_error("wav: unsupported sample width (PCM16 only)");
            size_t n = size / 2;
            out.samples.resize(n);
            for (size_t i = 0; i < n; ++i) {
                int16_t s;
                is.read(reinterpret_cast<char*>(&s), 2);
                if (!is) throw std::runtime_error("wav: truncated data chunk");
                out.samples[i] = static_cast<double>(s) / 32768.0;
            }
            out.sample_rate = static_cast<int>(rate);
            return out;
        } else {
            is.ignore(size + (size & 1));
            if (!is) throw std::runtime_error("wav: truncated chunk");
        }
    }
    throw std::runtime_error("wav: no data chunk in " + path);
}

void write_wav(const std::string& path, const AudioWave& wave) {
    auto os = io::open_out(path);
    uint32_t data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
    os.write("RIFF", 4);
    io::write_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    io::write_u32(os, 16);
    uint16_t fmt = 1, ch = 1, align = 2, bits = 16;
    os.write(reinterpret_cast<const char*>(&fmt), 2);
    os.write(reinterpret_cast<const char*>(&ch), 2);
    io::write_u32(os, static_cast<uint32_t>(wave.sample_rate));
    io::write_u32(os, static_cast<uint32_t>(wave.sample_rate * 2));
    os.write(reinterpret_cast<const char*>(&align), 2);
    os.write(reinterpret_cast<const char*>(&bits), 2);
    os.write("data", 4);
    io::write_u32(os, data_bytes);
    for (double s : wave.samples) {
        double clamped = std::max(-1.0, std::min(1.0, s));
        int16_t q = static_cast<int16_t>(std::max(-32768.0, std::min(32767.0, clamped * 32768.0)));
        os.write(reinterpret_cast<const char*>(&q), 2);
    }
}

}  // namespace tokalign
