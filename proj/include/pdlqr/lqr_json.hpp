#pragma once

#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "pdlqr/lqr.hpp"

namespace pdlqr {

// JSON schema for standalone LQR instances:
// {
//   "N": 2, "n": 1, "m": 1,
//   "s0": [2.0],
//   "stages": [{"Q": [[...]], "R": [[...]], "M": [[...]],
//               "q": [...], "r": [...],
//               "A": [[...]], "B": [[...]], "c": [...]}, ...],
//   "QN": [[...]], "qN": [...]
// }
// Matrices are nested row-major arrays.

class JsonFormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace json_detail {

inline Matrix read_matrix(const nlohmann::json& j, const std::string& field, int rows,
                          int cols) {
  if (!j.contains(field) || !j[field].is_array() ||
      static_cast<int>(j[field].size()) != rows) {
    throw JsonFormatError("field '" + field + "' must be a " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " matrix");
  }
  Matrix out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j[field][r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw JsonFormatError("field '" + field + "' row " + std::to_string(r) +
                            " must have " + std::to_string(cols) + " entries");
    }
    for (int c = 0; c < cols; ++c) {
      if (!row[c].is_number()) {
        throw JsonFormatError("field '" + field + "' has a non-numeric entry");
      }
      out(r, c) = row[c].get<double>();
    }
  }
  return out;
}

inline Vector read_vector(const nlohmann::json& j, const std::string& field, int size) {
  if (!j.contains(field) || !j[field].is_array() ||
      static_cast<int>(j[field].size()) != size) {
    throw JsonFormatError("field '" + field + "' must be a vector of length " +
                          std::to_string(size));
  }
  Vector out(size);
  for (int i = 0; i < size; ++i) {
    if (!j[field][i].is_number()) {
      throw JsonFormatError("field '" + field + "' has a non-numeric entry");
    }
    out(i) = j[field][i].get<double>();
  }
  return out;
}

inline nlohmann::json matrix_to_json(const Matrix& M) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out.push_back(row);
  }
  return out;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline int read_positive_int(const nlohmann::json& j, const std::string& field) {
  if (!j.contains(field) || !j[field].is_number_integer() || j[field].get<int>() < 1) {
    throw JsonFormatError("field '" + field + "' must be a positive integer");
  }
  return j[field].get<int>();
}

}  // namespace json_detail

inline LqrData lqr_from_json(const nlohmann::json& j) {
  LqrData data;
  data.N = json_detail::read_positive_int(j, "N");
  data.n = json_detail::read_positive_int(j, "n");
  data.m = json_detail::read_positive_int(j, "m");
  data.s0 = json_detail::read_vector(j, "s0", data.n);
  if (!j.contains("stages") || !j["stages"].is_array() ||
      static_cast<int>(j["stages"].size()) != data.N) {
    throw JsonFormatError("field 'stages' must be an array of length N");
  }
  data.stages.resize(data.N);
  for (int i = 0; i < data.N; ++i) {
    const auto& js = j["stages"][i];
    auto& s = data.stages[i];
    s.Q = json_detail::read_matrix(js, "Q", data.n, data.n);
    s.R = json_detail::read_matrix(js, "R", data.m, data.m);
    s.M = json_detail::read_matrix(js, "M", data.n, data.m);
    s.q = json_detail::read_vector(js, "q", data.n);
    s.r = json_detail::read_vector(js, "r", data.m);
    s.A = json_detail::read_matrix(js, "A", data.n, data.n);
    s.B = json_detail::read_matrix(js, "B", data.n, data.m);
    s.c = json_detail::read_vector(js, "c", data.n);
  }
  data.QN = json_detail::read_matrix(j, "QN", data.n, data.n);
  data.qN = json_detail::read_vector(j, "qN", data.n);
  data.validate();
  return data;
}

inline nlohmann::json lqr_to_json(const LqrData& data) {
  nlohmann::json j;
  j["N"] = data.N;
  j["n"] = data.n;
  j["m"] = data.m;
  j["s0"] = json_detail::vector_to_json(data.s0);
  j["stages"] = nlohmann::json::array();
  for (const auto& s : data.stages) {
    nlohmann::json js;
    js["Q"] = json_detail::matrix_to_json(s.Q);
    js["R"] = json_detail::matrix_to_json(s.R);
    js["M"] = json_detail::matrix_to_json(s.M);
    js["q"] = json_detail::vector_to_json(s.q);
    js["r"] = json_detail::vector_to_json(s.r);
    js["A"] = json_detail::matrix_to_json(s.A);
    js["B"] = json_detail::matrix_to_json(s.B);
    js["c"] = json_detail::vector_to_json(s.c);
    j["stages"].push_back(js);
  }
  j["QN"] = json_detail::matrix_to_json(data.QN);
  j["qN"] = json_detail::vector_to_json(data.qN);
  return j;
}

inline nlohmann::json lqr_solution_to_json(const LqrSolution& sol) {
  nlohmann::json j;
  j["x"] = nlohmann::json::array();
  for (const auto& v : sol.x) j["x"].push_back(json_detail::vector_to_json(v));
  j["u"] = nlohmann::json::array();
  for (const auto& v : sol.u) j["u"].push_back(json_detail::vector_to_json(v));
  j["lambda"] = nlohmann::json::array();
  for (const auto& v : sol.lambda) j["lambda"].push_back(json_detail::vector_to_json(v));
  return j;
}

}  // namespace pdlqr
