#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sde_elbo/vp_sde.hpp"

namespace sde_elbo {

std::string base64_encode(const std::uint8_t* data, std::size_t n);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::string base64_encode_doubles(const double* data, std::size_t n);
void base64_decode_doubles(const std::string& text, double* out, std::size_t n);
std::string base64_encode_doubles_rowmajor(const Mat& m);
void base64_decode_doubles_rowmajor(const std::string& text, Mat& out);

// RFC-4180-style CSV with a header row; fields are formatted with enough
// digits to round-trip doubles.
std::string format_double(double x);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows,
               const std::vector<std::string>& comment_lines = {});

// d = 2 scatter plot; no raster dependencies, diff-able in tests.
void write_scatter_svg(const std::string& path, const Mat& points_d_by_n,
                       int size_px = 480);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// FNV-1a over the canonical config text; stamped into checkpoints/metrics.
std::string fnv1a_hex(const std::string& text);

}  // namespace sde_elbo
