// mesoforge-synth: writes the procedural two-class video dataset as PNG
// frames plus train.jsonl and test.jsonl manifests.

#include <iostream>

#include <CLI11.hpp>

#include "mesoforge/parallel.hpp"
#include "mesoforge/synthetic.hpp"

int main(int argc, char** argv) {
  mesoforge::tune_allocator();
  CLI::App app{"Write the synthetic forged/real video dataset"};
  mesoforge::SyntheticSpec spec;
  std::string out = "synthetic";
  int threads = 1;
  app.add_option("--out", out, "Output directory")->capture_default_str();
  app.add_option("--videos", spec.videos, "Number of videos")->capture_default_str();
  app.add_option("--frames", spec.frames_per_video, "Frames per video")->capture_default_str();
  app.add_option("--train-videos", spec.train_videos, "Videos in train.jsonl")
      ->capture_default_str();
  app.add_option("--size", spec.image_size, "Image side in pixels")->capture_default_str();
  app.add_option("--seed", spec.seed, "Seed")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    mesoforge::set_num_threads(threads);
    mesoforge::write_synthetic_dataset(spec, out);
  } catch (const std::exception& e) {
    std::cerr << "mesoforge-synth: " << e.what() << "\n";
    return 2;
  }
  std::cout << "wrote " << spec.videos * spec.frames_per_video << " frames to " << out << "\n";
  return 0;
}
