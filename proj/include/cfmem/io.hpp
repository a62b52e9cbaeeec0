#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfmem {

class CfmemError : public std::runtime_error {
public:
    explicit CfmemError(const std::string& msg) : std::runtime_error(msg) {}
};

// 64-bit FNV-1a, used for provenance hashes of serialized payloads.
class Fnv1a64 {
public:
    void update(const void* data, size_t n) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ull;
        }
    }
    uint64_t digest() const noexcept { return state_; }

private:
    uint64_t state_{0xcbf29ce484222325ull};
};

// Sink abstraction so the same serializer can write a file or feed a hash.
class ByteSink {
public:
    virtual ~ByteSink() = default;
    virtual void write(const void* data, size_t n) = 0;
};

class FileSink : public ByteSink {
public:
    explicit FileSink(const std::filesystem::path& path);
    ~FileSink() override;
    FileSink(const FileSink&) = delete;
    FileSink& operator=(const FileSink&) = delete;
    void write(const void* data, size_t n) override;
    void close();

private:
    std::FILE* f_{nullptr};
    std::filesystem::path path_;
};

class HashSink : public ByteSink {
public:
    void write(const void* data, size_t n) override { h_.update(data, n); }
    uint64_t digest() const noexcept { return h_.digest(); }

private:
    Fnv1a64 h_;
};

// Little-endian primitive writers. All cfmem binary formats go through these.
void put_u8(ByteSink& s, uint8_t v);
void put_u32(ByteSink& s, uint32_t v);
void put_u64(ByteSink& s, uint64_t v);
void put_f32(ByteSink& s, float v);
void put_f64(ByteSink& s, double v);
void put_bytes(ByteSink& s, std::span<const uint8_t> v);
void put_string(ByteSink& s, const std::string& v);  // u32 length prefix

// Readers over a whole file loaded into memory; throw CfmemError on short reads.
class ByteReader {
public:
    explicit ByteReader(std::vector<uint8_t> data) : data_(std::move(data)) {}
    uint8_t get_u8();
    uint32_t get_u32();
    uint64_t get_u64();
    float get_f32();
    double get_f64();
    std::string get_string();
    void get_bytes(void* out, size_t n);
    size_t remaining() const noexcept { return data_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    void need(size_t n) const;
    std::vector<uint8_t> data_;
    size_t pos_{0};
};

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);

// Runs fn(i) for i in [0, n). jobs <= 1 stays on the calling thread.
// Exceptions from workers are rethrown on the calling thread.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

// Minimal CSV writer; quotes a field only when it contains ',', '"' or '\n'.
class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path);
    ~CsvWriter();
    void row(const std::vector<std::string>& fields);

private:
    std::FILE* f_{nullptr};
    std::filesystem::path path_;
};

std::string fmt_double(double v);  // shortest round-trip formatting

// Portable draws from a mt19937_64 engine. The std distributions are
// implementation-defined, so anything reproducible goes through these.
uint64_t rand_below(std::mt19937_64& rng, uint64_t n);
double rand_unit(std::mt19937_64& rng);  // [0, 1) with 53 random bits

}  // namespace cfmem
