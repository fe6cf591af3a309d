//! Per-neuron forcing functions in their direct form.
//!
//! Receptive-field vectors share one layout: `(channel, dy, dx, delay)`
//! flattened row-major. The layer engine computes the same quantities
//! incrementally; these functions are its reference.

/// Largest receptive-field trace total among the neighborhood members.
pub fn neighborhood_max(neighborhood_traces: &[&[f64]]) -> f64 {
    neighborhood_traces
        .iter()
        .map(|x| x.iter().sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn weighted_input(w: &[f64], spikes: &[bool]) -> f64 {
    debug_assert_eq!(w.len(), spikes.len());
    w.iter()
        .zip(spikes)
        .filter(|(_, &s)| s)
        .map(|(w, _)| w)
        .sum()
}

/// Single-synaptic convolution: `sum W s - max_b sum X_b`.
///
/// `neighborhood_traces` holds the receptive-field traces of every neuron in
/// the 3x3 same-map neighborhood of the target, itself included.
pub fn forcing_ssconv(w: &[f64], spikes: &[bool], neighborhood_traces: &[&[f64]]) -> f64 {
    weighted_input(w, spikes) - neighborhood_max(neighborhood_traces)
}

/// Multisynaptic convolution: `sum (W_exc + beta W_inh) s - max_b sum X_b`.
pub fn forcing_msconv(
    w_exc: &[f64],
    w_inh: &[f64],
    beta: f64,
    spikes: &[bool],
    neighborhood_traces: &[&[f64]],
) -> f64 {
    let w: Vec<f64> = w_exc.iter().zip(w_inh).map(|(e, i)| e + beta * i).collect();
    forcing_ssconv(&w, spikes, neighborhood_traces)
}

/// Fully connected: `sum (W s - X)` over the neuron's own synapses.
pub fn forcing_dense(w: &[f64], spikes: &[bool], x: &[f64]) -> f64 {
    weighted_input(w, spikes) - x.iter().sum::<f64>()
}

/// Unit-weight sum over all incoming maps at one location.
pub fn forcing_merge(spikes_across_maps: &[bool]) -> f64 {
    spikes_across_maps.iter().filter(|&&s| s).count() as f64
}

/// Unit-weight sum over the block of the matched incoming map.
pub fn forcing_pooling(block_spikes: &[bool]) -> f64 {
    forcing_merge(block_spikes)
}
