#pragma once

// Little-endian byte helpers shared by the checkpoint and teacher-artifact codecs.

#include "timedistill/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace timedistill::binio {

template <class T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
}

class Writer {
public:
    template <class T>
    void put(T v) {
        v = to_little(v);
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void bytes(std::string_view s) { buf_.append(s); }
    const std::string& data() const { return buf_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write '" + path.string() + "'");
        f.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!f) throw DataError("write failed for '" + path.string() + "'");
    }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string data, std::string source) : buf_(std::move(data)), source_(std::move(source)) {}

    static Reader open(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot open '" + path.string() + "'");
        std::ostringstream s;
        s << f.rdbuf();
        return Reader(s.str(), path.string());
    }

    std::size_t remaining() const { return buf_.size() - pos_; }
    std::size_t size() const { return buf_.size(); }
    const std::string& source() const { return source_; }

    std::string_view take(std::size_t n, const char* what) {
        if (remaining() < n) {
            std::ostringstream msg;
            msg << source_ << ": truncated " << what << ": expected " << n << " bytes, got " << remaining();
            throw DataError(msg.str());
        }
        std::string_view v(buf_.data() + pos_, n);
        pos_ += n;
        return v;
    }

    template <class T>
    T get(const char* what) {
        const auto raw = take(sizeof(T), what);
        T v;
        std::memcpy(&v, raw.data(), sizeof(T));
        return to_little(v);
    }

private:
    std::string buf_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace timedistill::binio
