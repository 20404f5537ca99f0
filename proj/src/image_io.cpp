#include "vistrack/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "vistrack/errors.hpp"

namespace vistrack {

namespace {

int to_byte(double v) {
  int k = static_cast<int>(v * 255.0 + 0.5);
  return std::min(std::max(k, 0), 255);
}

}  // namespace

void write_frame_png(const std::string& path, const Tensor& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw ShapeError("write_frame_png: expects [3,H,W]");
  int h = frame.dim(1), w = frame.dim(2);
  cv::Mat img(h, w, CV_8UC3);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      // OpenCV stores BGR.
      img.at<cv::Vec3b>(r, c) = cv::Vec3b(static_cast<uchar>(to_byte(frame.at(2, r, c))),
                                          static_cast<uchar>(to_byte(frame.at(1, r, c))),
                                          static_cast<uchar>(to_byte(frame.at(0, r, c))));
    }
  if (!cv::imwrite(path, img)) throw FormatError("cannot write PNG: " + path);
}

Tensor read_frame_png(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw FormatError("cannot read PNG: " + path);
  Tensor frame({3, img.rows, img.cols});
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) {
      cv::Vec3b px = img.at<cv::Vec3b>(r, c);
      frame.at(0, r, c) = px[2] / 255.0;
      frame.at(1, r, c) = px[1] / 255.0;
      frame.at(2, r, c) = px[0] / 255.0;
    }
  return frame;
}

void write_id_mask_png(const std::string& path, const IdGrid& mask) {
  cv::Mat img(mask.height, mask.width, CV_16UC1);
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c) img.at<uint16_t>(r, c) = mask.at(r, c);
  if (!cv::imwrite(path, img)) throw FormatError("cannot write PNG: " + path);
}

IdGrid read_id_mask_png(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (img.empty()) throw FormatError("cannot read PNG: " + path);
  if (img.type() != CV_16UC1) throw FormatError("expected 16-bit single-channel PNG: " + path);
  IdGrid mask(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) mask.at(r, c) = img.at<uint16_t>(r, c);
  return mask;
}

Tensor quantize_frame(const Tensor& frame) {
  Tensor q = frame;
  for (int64_t i = 0; i < q.size(); ++i) q[i] = to_byte(q[i]) / 255.0;
  return q;
}

}  // namespace vistrack
