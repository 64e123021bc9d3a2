use crate::grid_store::{Grid, GridError, Timestamp};

/// Per-hour rain forecasts in mm/hr, with attention maps when the producing
/// model has an attention module.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastBundle {
    pub anchor: Timestamp,
    pub height: usize,
    pub width: usize,
    pub predictions: Vec<Vec<f64>>,
    /// Empty when no attention module produced the forecast. Values in [0, 1].
    pub attention: Vec<Vec<f64>>,
    /// Model or baseline name, e.g. `GRU+WMAE+Adv+Atn` or `Last 10min`.
    pub source: String,
}

impl ForecastBundle {
    pub fn hours(&self) -> usize {
        self.predictions.len()
    }

    /// Hour `h` as a rain grid stamped at the start of that hour.
    pub fn prediction_grid(&self, h: usize) -> Result<Grid, GridError> {
        let values = self.predictions[h].iter().map(|&v| v as f32).collect();
        Grid::rain(self.anchor.offset(60 * h as i64), self.height, self.width, values)
    }

    pub fn attention_grid(&self, h: usize) -> Option<Result<Grid, GridError>> {
        self.attention.get(h).map(|a| {
            let values = a.iter().map(|&v| v as f32).collect();
            Grid::rain(self.anchor.offset(60 * h as i64), self.height, self.width, values)
        })
    }
}
