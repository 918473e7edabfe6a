//! Error rates, frame agreement and spike analytics.

mod edit;
mod frames;

pub use edit::{cer, edit_distance, wer, words, EditCounts, ErrorTally};
pub use frames::{
    agreement, alignment_shift, spike_profile, write_spikes_csv, AgreementReport, Spike, SpikeProfile,
};
