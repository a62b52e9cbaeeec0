#include "cfmem/io.hpp"

#include <atomic>
#include <charconv>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>

namespace cfmem {

FileSink::FileSink(const std::filesystem::path& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_) {
        throw CfmemError("cannot open for writing: " + path.string());
    }
}

FileSink::~FileSink() {
    if (f_) {
        std::fclose(f_);
    }
}

void FileSink::write(const void* data, size_t n) {
    if (n == 0) {
        return;
    }
    if (std::fwrite(data, 1, n, f_) != n) {
        throw CfmemError("short write: " + path_.string());
    }
}

void FileSink::close() {
    if (f_) {
        if (std::fclose(f_) != 0) {
            f_ = nullptr;
            throw CfmemError("close failed: " + path_.string());
        }
        f_ = nullptr;
    }
}

void put_u8(ByteSink& s, uint8_t v) { s.write(&v, 1); }

void put_u32(ByteSink& s, uint32_t v) {
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<uint8_t>(v >> (8 * i));
    }
    s.write(b, 4);
}

void put_u64(ByteSink& s, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<uint8_t>(v >> (8 * i));
    }
    s.write(b, 8);
}

void put_f32(ByteSink& s, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(s, u);
}

void put_f64(ByteSink& s, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(s, u);
}

void put_bytes(ByteSink& s, std::span<const uint8_t> v) { s.write(v.data(), v.size()); }

void put_string(ByteSink& s, const std::string& v) {
    put_u32(s, static_cast<uint32_t>(v.size()));
    s.write(v.data(), v.size());
}

void ByteReader::need(size_t n) const {
    if (pos_ + n > data_.size()) {
        throw CfmemError("truncated file: wanted " + std::to_string(n) + " bytes at offset " +
                         std::to_string(pos_));
    }
}

uint8_t ByteReader::get_u8() {
    need(1);
    return data_[pos_++];
}

uint32_t ByteReader::get_u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
}

uint64_t ByteReader::get_u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 8;
    return v;
}

float ByteReader::get_f32() {
    uint32_t u = get_u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

double ByteReader::get_f64() {
    uint64_t u = get_u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

std::string ByteReader::get_string() {
    uint32_t n = get_u32();
    need(n);
    std::string v(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return v;
}

void ByteReader::get_bytes(void* out, size_t n) {
    need(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) {
        throw CfmemError("cannot open: " + path.string());
    }
    std::fseek(f, 0, SEEK_END);
    long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> data(size > 0 ? static_cast<size_t>(size) : 0);
    if (!data.empty() && std::fread(data.data(), 1, data.size(), f) != data.size()) {
        std::fclose(f);
        throw CfmemError("read failed: " + path.string());
    }
    std::fclose(f);
    return data;
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
    if (n == 0) {
        return;
    }
    if (jobs <= 0) {
        jobs = static_cast<int>(std::thread::hardware_concurrency());
        if (jobs <= 0) {
            jobs = 1;
        }
    }
    size_t workers = std::min<size_t>(static_cast<size_t>(jobs), n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto work = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) {
                    err = std::current_exception();
                }
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back(work);
    }
    for (auto& t : pool) {
        t.join();
    }
    if (err) {
        std::rethrow_exception(err);
    }
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_) {
        throw CfmemError("cannot open for writing: " + path.string());
    }
}

CsvWriter::~CsvWriter() {
    if (f_) {
        std::fclose(f_);
    }
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    std::string line;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) {
            line += ',';
        }
        const std::string& v = fields[i];
        if (v.find_first_of(",\"\n") != std::string::npos) {
            line += '"';
            for (char c : v) {
                if (c == '"') {
                    line += '"';
                }
                line += c;
            }
            line += '"';
        } else {
            line += v;
        }
    }
    line += '\n';
    if (std::fwrite(line.data(), 1, line.size(), f_) != line.size()) {
        throw CfmemError("short write: " + path_.string());
    }
}

std::string fmt_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

uint64_t rand_below(std::mt19937_64& rng, uint64_t n) {
    if (n == 0) {
        throw CfmemError("rand_below: empty range");
    }
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % n;
}

double rand_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace cfmem
