#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokalign/matrix.hpp"

namespace tokalign::io {

static_assert(sizeof(float) == 4 && sizeof(double) == 8);

inline void write_u32(std::ostream& os, uint32_t x) { os.write(reinterpret_cast<const char*>(&x), 4); }
inline void write_u64(std::ostream& os, uint64_t x) { os.write(reinterpret_cast<const char*>(&x), 8); }
inline void write_f32(std::ostream& os, float x) { os.write(reinterpret_cast<const char*>(&x), 4); }
inline void write_f64(std::ostream& os, double x) { os.write(reinterpret_cast<const char*>(&x), 8); }

inline uint32_t read_u32(std::istream& is) {
    uint32_t x;
    is.read(reinterpret_cast<char*>(&x), 4);
    if (!is) throw std::runtime_error("unexpected end of file");
    return x;
}
inline uint64_t read_u64(std::istream& is) {
    uint64_t x;
    is.read(reinterpret_cast<char*>(&x), 8);
    if (!is) throw std::runtime_error("unexpected end of file");
    return x;
}
inline float read_f32(std::istream& is) {
    float x;
    is.read(reinterpret_cast<char*>(&x), 4);
    if (!is) throw std::runtime_error("unexpected end of file");
    return x;
}
inline double read_f64(std::istream& is) {
    double x;
    is.read(reinterpret_cast<char*>(&x), 8);
    if (!is) throw std::runtime_error("unexpected end of file");
    return x;
}

inline void write_magic(std::ostream& os, const char magic[5]) { os.write(magic, 4); }
inline void expect_magic(std::istream& is, const char magic[5], const std::string& what) {
    char buf[4];
    is.read(buf, 4);
    if (!is || std::string(buf, 4) != std::string(magic, 4))
        throw std::runtime_error(what + ": bad magic");
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    return os;
}
inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return is;
}

// Matrix payload stored as f32 (feature/teacher/stats files).
inline void write_matrix_f32(std::ostream& os, const Matrix& m) {
    for (double x : m.v) write_f32(os, static_cast<float>(x));
}
inline void read_matrix_f32(std::istream& is, Matrix& m) {
    for (double& x : m.v) x = static_cast<double>(read_f32(is));
}

}  // namespace tokalign::io
