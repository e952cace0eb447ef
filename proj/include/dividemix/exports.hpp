#pragma once

#include <string>
#include <vector>

namespace dmx {

// Converts a finished run directory into plot-ready CSV series:
//   accuracy.csv              epoch,phase,acc_ensemble,acc_net1,acc_net2,reported_acc
//   auc.csv                   epoch,auc_net1,auc_net2
//   loss_hist_epoch_<e>.csv   bin_low,bin_high,clean_count,noisy_count
// Histograms use 50 uniform bins over normalized loss [0,1] from the
// division dumps (skipped when the run was made without dump_divisions).
// Returns the list of files written.
std::vector<std::string> export_plots(const std::string& run_dir);

} // namespace dmx
