#include "gesture/video_io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "gesture/error.hpp"

namespace fs = std::filesystem;

namespace gesture {
namespace {

constexpr char kClipMagic[4] = {'G', 'C', 'L', 'P'};

void check_video(const Video& v) {
  if (v.dim() != 4 || v.size(3) != 3) {
    throw DataError("expected a (T,H,W,3) video, got " + std::string(c10::str(v.sizes())));
  }
}

}  // namespace

torch::Tensor to_uint8(const Video& video) {
  return video.mul(255.0).round_().clamp_(0, 255).to(torch::kUInt8).contiguous();
}

Video from_uint8(const torch::Tensor& bytes) { return bytes.to(torch::kFloat).div_(255.0); }

void save_raw_clip(const std::string& path, const Video& video) {
  check_video(video);
  auto bytes = to_uint8(video);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write clip '" + path + "'");
  out.write(kClipMagic, 4);
  for (int d = 0; d < 4; ++d) {
    const auto v = static_cast<int32_t>(bytes.size(d));
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  out.write(reinterpret_cast<const char*>(bytes.data_ptr<uint8_t>()),
            static_cast<std::streamsize>(bytes.numel()));
  if (!out) throw DataError("failed writing clip '" + path + "'");
}

Video load_raw_clip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open clip '" + path + "'");
  char magic[4];
  int32_t dims[4];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || std::memcmp(magic, kClipMagic, 4) != 0) throw DataError("'" + path + "' is not a clip file");
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1 || dims[3] != 3) {
    throw DataError("clip '" + path + "' has invalid dims");
  }
  auto bytes = torch::empty({dims[0], dims[1], dims[2], dims[3]}, torch::kUInt8);
  in.read(reinterpret_cast<char*>(bytes.data_ptr<uint8_t>()), static_cast<std::streamsize>(bytes.numel()));
  if (!in) throw DataError("clip '" + path + "' is truncated");
  return from_uint8(bytes);
}

void save_frame_dir(const std::string& dir, const Video& video) {
  check_video(video);
  fs::create_directories(dir);
  auto bytes = to_uint8(video);
  const int h = static_cast<int>(video.size(1));
  const int w = static_cast<int>(video.size(2));
  for (int64_t t = 0; t < video.size(0); ++t) {
    // OpenCV stores BGR.
    auto frame = bytes[t].flip(2).contiguous();
    cv::Mat mat(h, w, CV_8UC3, frame.data_ptr<uint8_t>());
    char name[32];
    std::snprintf(name, sizeof name, "%06lld.png", static_cast<long long>(t));
    if (!cv::imwrite((fs::path(dir) / name).string(), mat)) {
      throw DataError("cannot write frame " + std::to_string(t) + " under '" + dir + "'");
    }
  }
}

Video load_frame_dir(const std::string& dir) {
  std::vector<std::pair<long long, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto stem = entry.path().stem().string();
    std::string digits;
    for (char ch : stem) {
      if (std::isdigit(static_cast<unsigned char>(ch))) digits += ch;
    }
    if (digits.empty()) continue;
    files.emplace_back(std::stoll(digits), entry.path());
  }
  if (files.empty()) throw DataError("no numbered frames in '" + dir + "'");
  std::sort(files.begin(), files.end());
  std::vector<torch::Tensor> frames;
  for (const auto& [index, path] : files) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (mat.empty()) throw DataError("cannot decode frame '" + path.string() + "'");
    auto t = torch::from_blob(mat.data, {mat.rows, mat.cols, 3}, torch::kUInt8).flip(2).clone();
    if (!frames.empty() && t.sizes() != frames.front().sizes()) {
      throw DataError("frame '" + path.string() + "' has a different size than frame 0");
    }
    frames.push_back(t);
  }
  return from_uint8(torch::stack(frames));
}

Video load_video(const std::string& path) {
  if (fs::is_directory(path)) return load_frame_dir(path);
  return load_raw_clip(path);
}

std::vector<Box> load_boxes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open box file '" + path + "'");
  std::vector<Box> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::replace(line.begin(), line.end(), ',', ' ');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Box b;
    if (!(ss >> b.x0 >> b.y0 >> b.x1 >> b.y1)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 'x0 y0 x1 y1'");
    }
    boxes.push_back(b);
  }
  return boxes;
}

}  // namespace gesture
