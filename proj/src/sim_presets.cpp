/*
 * Copyright (c) The MemFigLess Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "memfigless/sim.hpp"

namespace memfigless::sim {

// Bundled workload fixtures. Each one keeps three properties over the
// standard profiling grid (payloads 10..9810, memories 128..3008):
//
//  - the memory floor stays inside a single 128 MB band, away from the band
//    edges, so allocations at or below the band floor always OOM and the
//    next level up always fits;
//  - speedup saturates 96 MB past the first grid level above the floor
//    band (ref_memory * max_speedup == 128 * (floor_band + 1) + 96), so the
//    first feasible level runs visibly slower than everything above it and
//    the rest of the range is a flat plateau;
//  - cold-start init and noise are small against the payload-driven
//    duration spread, keeping the signal learnable.
//
// Floors and durations rise with payload size. Compute-heavy entries
// (matmul, linpack, graph-*) sit in higher bands with longer runtimes; the
// web-style entries are light. pyaes and chameleon take two-dimensional
// payloads.
std::vector<FunctionModel> preset_models() {
  std::vector<FunctionModel> models;

  FunctionModel matmul;
  matmul.name = "matmul";
  matmul.payload_dims = 1;
  matmul.mem_base_mb = 1030.0;
  matmul.mem_per_unit_mb = 2.0;
  matmul.mem_exp = 0.30;
  matmul.work_base_ms = 30.0;
  matmul.work_exp = 0.28;
  matmul.ref_memory_mb = 624.0;
  matmul.max_speedup = 2.0;
  matmul.noise_sigma = 0.05;
  matmul.cold_start_mean_ms = 25.0;
  matmul.cold_start_jitter_ms = 8.0;
  matmul.timeout_ms = 2000.0;
  models.push_back(matmul);

  FunctionModel linpack;
  linpack.name = "linpack";
  linpack.payload_dims = 1;
  linpack.mem_base_mb = 902.0;
  linpack.mem_per_unit_mb = 1.6;
  linpack.mem_exp = 0.30;
  linpack.work_base_ms = 55.0;
  linpack.work_exp = 0.24;
  linpack.ref_memory_mb = 700.0;
  linpack.max_speedup = 1.6;
  linpack.noise_sigma = 0.05;
  linpack.cold_start_mean_ms = 30.0;
  linpack.cold_start_jitter_ms = 10.0;
  linpack.timeout_ms = 3000.0;
  models.push_back(linpack);

  FunctionModel pyaes;
  pyaes.name = "pyaes";
  pyaes.payload_dims = 2;
  pyaes.mem_base_mb = 773.0;
  pyaes.mem_per_unit_mb = 1.2;
  pyaes.mem_exp = 0.32;
  pyaes.work_base_ms = 14.0;
  pyaes.work_exp = 0.26;
  pyaes.ref_memory_mb = 620.0;
  pyaes.max_speedup = 1.6;
  pyaes.noise_sigma = 0.05;
  pyaes.cold_start_mean_ms = 15.0;
  pyaes.cold_start_jitter_ms = 5.0;
  pyaes.timeout_ms = 1000.0;
  models.push_back(pyaes);

  FunctionModel mst;
  mst.name = "graph-mst";
  mst.payload_dims = 1;
  mst.mem_base_mb = 1414.0;
  mst.mem_per_unit_mb = 2.2;
  mst.mem_exp = 0.28;
  mst.work_base_ms = 40.0;
  mst.work_exp = 0.30;
  mst.ref_memory_mb = 1200.0;
  mst.max_speedup = 1.36;
  mst.noise_sigma = 0.05;
  mst.cold_start_mean_ms = 35.0;
  mst.cold_start_jitter_ms = 10.0;
  mst.timeout_ms = 3000.0;
  models.push_back(mst);

  FunctionModel bfs;
  bfs.name = "graph-bfs";
  bfs.payload_dims = 1;
  bfs.mem_base_mb = 774.0;
  bfs.mem_per_unit_mb = 1.4;
  bfs.mem_exp = 0.26;
  bfs.work_base_ms = 18.0;
  bfs.work_exp = 0.27;
  bfs.ref_memory_mb = 620.0;
  bfs.max_speedup = 1.6;
  bfs.noise_sigma = 0.05;
  bfs.cold_start_mean_ms = 20.0;
  bfs.cold_start_jitter_ms = 6.0;
  bfs.timeout_ms = 1000.0;
  models.push_back(bfs);

  FunctionModel pagerank;
  pagerank.name = "graph-pagerank";
  pagerank.payload_dims = 1;
  pagerank.mem_base_mb = 1158.0;
  pagerank.mem_per_unit_mb = 1.8;
  pagerank.mem_exp = 0.29;
  pagerank.work_base_ms = 34.0;
  pagerank.work_exp = 0.25;
  pagerank.ref_memory_mb = 860.0;
  pagerank.max_speedup = 1.6;
  pagerank.noise_sigma = 0.05;
  pagerank.cold_start_mean_ms = 30.0;
  pagerank.cold_start_jitter_ms = 8.0;
  pagerank.timeout_ms = 2000.0;
  models.push_back(pagerank);

  FunctionModel html;
  html.name = "dynamic-html";
  html.payload_dims = 1;
  html.mem_base_mb = 774.0;
  html.mem_per_unit_mb = 1.0;
  html.mem_exp = 0.30;
  html.work_base_ms = 7.0;
  html.work_exp = 0.24;
  html.ref_memory_mb = 800.0;
  html.max_speedup = 1.24;
  html.noise_sigma = 0.05;
  html.cold_start_mean_ms = 10.0;
  html.cold_start_jitter_ms = 3.0;
  html.timeout_ms = 500.0;
  models.push_back(html);

  FunctionModel chameleon;
  chameleon.name = "chameleon";
  chameleon.payload_dims = 2;
  chameleon.mem_base_mb = 902.0;
  chameleon.mem_per_unit_mb = 1.5;
  chameleon.mem_exp = 0.30;
  chameleon.work_base_ms = 11.0;
  chameleon.work_exp = 0.28;
  chameleon.ref_memory_mb = 800.0;
  chameleon.max_speedup = 1.4;
  chameleon.noise_sigma = 0.05;
  chameleon.cold_start_mean_ms = 15.0;
  chameleon.cold_start_jitter_ms = 5.0;
  chameleon.timeout_ms = 800.0;
  models.push_back(chameleon);

  return models;
}

FunctionModel preset_model(const std::string& name) {
  for (FunctionModel& model : preset_models()) {
    if (model.name == name) return model;
  }
  throw UnknownFunction("no preset named '" + name + "'");
}

}  // namespace memfigless::sim
