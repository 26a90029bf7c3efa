#include "dtn/data.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <sys/file.h>

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <map>
#include <sstream>

namespace dtn::data {
namespace {

namespace fs = std::filesystem;

constexpr const char* kDecodeVersion = "1";
constexpr const char* kDefaultMnistBase = "https://ossci-datasets.s3.amazonaws.com/mnist/";
constexpr const char* kDefaultSvhnBase = "http://ufldl.stanford.edu/housenumbers/";

// Single writer per cache split directory.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) {
        fs::create_directories(dir);
        fd_ = ::open((dir / ".lock").c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ >= 0) ::flock(fd_, LOCK_EX);
    }
    ~DirLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }

private:
    int fd_ = -1;
};

std::vector<uint8_t> read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw CorruptionError("cannot read " + p.string());
    in.seekg(0, std::ios::end);
    const std::streamoff len = in.tellg();
    in.seekg(0);
    std::vector<uint8_t> out(static_cast<size_t>(len));
    in.read(reinterpret_cast<char*>(out.data()), len);
    return out;
}

void write_file(const fs::path& p, const std::vector<uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::map<std::string, std::string> read_manifest(const fs::path& p) {
    std::map<std::string, std::string> kv;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

void write_manifest(const fs::path& p, const std::map<std::string, std::string>& kv) {
    std::ofstream out(p);
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

// Returns the bytes of one cache file, downloading and checksumming as
// needed. `manifest` is updated in place.
std::vector<uint8_t> ensure_file(const fs::path& dir, const std::string& filename,
                                 const std::string& base_url, bool offline,
                                 std::map<std::string, std::string>& manifest, bool& downloaded) {
    const fs::path file = dir / filename;
    const std::string sha_key = "sha256." + filename;
    if (fs::exists(file)) {
        auto bytes = read_file(file);
        const std::string sha = sha256_hex(bytes);
        auto it = manifest.find(sha_key);
        if (it != manifest.end() && it->second != sha)
            throw CorruptionError("checksum mismatch for cached " + file.string() +
                                  " (expected " + it->second + ", got " + sha + ")");
        manifest[sha_key] = sha;
        return bytes;
    }
    if (offline) throw DownloadError("offline and no cached copy of " + filename);
    const std::string url = base_url + filename;
    auto bytes = http_get(url);
    write_file(file, bytes);
    manifest["url." + filename] = url;
    manifest[sha_key] = sha256_hex(bytes);
    downloaded = true;
    return bytes;
}

}  // namespace

std::vector<uint8_t> http_get(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw DownloadError("malformed url: " + url);
    const std::string scheme = url.substr(0, scheme_end);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string host = url.substr(scheme_end + 3, path_start - scheme_end - 3);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    auto run = [&](auto& cli) -> std::vector<uint8_t> {
        cli.set_follow_location(true);
        cli.set_connection_timeout(30);
        cli.set_read_timeout(300);
        auto res = cli.Get(path);
        if (!res || res->status != 200)
            throw DownloadError("download failed (retryable): " + url +
                                (res ? " status " + std::to_string(res->status) : ""));
        return std::vector<uint8_t>(res->body.begin(), res->body.end());
    };
    if (scheme == "https") {
        httplib::SSLClient cli(host);
        cli.enable_server_certificate_verification(false);
        return run(cli);
    }
    if (scheme == "http") {
        httplib::Client cli(host);
        return run(cli);
    }
    throw DownloadError("unsupported scheme in url: " + url);
}

FetchResult fetch_svhn(SvhnSplit split, const FetchOptions& opt) {
    const std::string split_name = split == SvhnSplit::EXTRA ? "extra" : "test";
    const std::string filename = split_name + "_32x32.mat";
    const fs::path dir = opt.cache_dir / "svhn" / split_name;
    DirLock lock(dir);
    auto manifest = read_manifest(dir / "manifest.txt");
    const bool had_manifest = !manifest.empty();
    bool downloaded = false;
    const std::string base = opt.svhn_base_url.empty() ? kDefaultSvhnBase : opt.svhn_base_url;
    auto bytes = ensure_file(dir, filename, base, opt.offline, manifest, downloaded);
    FetchResult r;
    r.split = decode_svhn_mat(bytes, "svhn-" + split_name, Domain::SOURCE);
    r.split.set_source_checksum(manifest["sha256." + filename]);
    r.from_cache = had_manifest && !downloaded;
    manifest["count"] = std::to_string(r.split.size());
    manifest["decode_version"] = kDecodeVersion;
    write_manifest(dir / "manifest.txt", manifest);
    return r;
}

FetchResult fetch_mnist(MnistSplit split, const FetchOptions& opt) {
    const bool train = split == MnistSplit::TRAIN;
    const std::string split_name = train ? "train" : "test";
    const std::string img_file =
        train ? "train-images-idx3-ubyte.gz" : "t10k-images-idx3-ubyte.gz";
    const std::string lab_file =
        train ? "train-labels-idx1-ubyte.gz" : "t10k-labels-idx1-ubyte.gz";
    const fs::path dir = opt.cache_dir / "mnist" / split_name;
    DirLock lock(dir);
    auto manifest = read_manifest(dir / "manifest.txt");
    const bool had_manifest = !manifest.empty();
    bool downloaded = false;
    const std::string base = opt.mnist_base_url.empty() ? kDefaultMnistBase : opt.mnist_base_url;
    auto img = ensure_file(dir, img_file, base, opt.offline, manifest, downloaded);
    auto lab = ensure_file(dir, lab_file, base, opt.offline, manifest, downloaded);
    FetchResult r;
    r.split = decode_mnist_idx(img, lab, "mnist-" + split_name, Domain::TARGET);
    r.split.set_source_checksum(manifest["sha256." + img_file]);
    r.from_cache = had_manifest && !downloaded;
    manifest["count"] = std::to_string(r.split.size());
    manifest["decode_version"] = kDecodeVersion;
    write_manifest(dir / "manifest.txt", manifest);
    return r;
}

}  // namespace dtn::data
