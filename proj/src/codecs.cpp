#include <openssl/evp.h>
#include <zlib.h>

#include <cstring>

#include "dtn/data.hpp"

namespace dtn::data {

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& bytes) {
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    // 16+MAX_WBITS: accept gzip wrapper.
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
        throw CorruptionError("gunzip: inflateInit failed");
    std::vector<uint8_t> out;
    std::vector<uint8_t> buf(1 << 20);
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw CorruptionError("gunzip: corrupt gzip stream");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

std::vector<uint8_t> gzip_compress(const std::vector<uint8_t>& bytes) {
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    if (deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw std::runtime_error("gzip_compress: deflateInit failed");
    std::vector<uint8_t> out;
    std::vector<uint8_t> buf(1 << 20);
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = deflate(&zs, Z_FINISH);
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    }
    deflateEnd(&zs);
    return out;
}

std::string sha256_hex(const uint8_t* data, size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int dlen = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    // Feed in chunks; EVP_DigestUpdate takes size_t but stay chunked for
    // very large buffers anyway.
    const size_t chunk = 1 << 24;
    for (size_t off = 0; off < len; off += chunk)
        EVP_DigestUpdate(ctx, data + off, std::min(chunk, len - off));
    if (len == 0) EVP_DigestUpdate(ctx, data, 0);
    EVP_DigestFinal_ex(ctx, digest, &dlen);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(dlen * 2);
    for (unsigned int i = 0; i < dlen; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(const std::vector<uint8_t>& bytes) {
    return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace dtn::data
