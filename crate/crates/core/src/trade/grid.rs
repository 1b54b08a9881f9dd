use super::TradeError;
use chrono::{DateTime, Datelike, Duration, NaiveTime, Timelike, Utc, Weekday};

/// Business-time filter: an inclusive daily interval plus a weekday switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusinessCalendar {
    pub day_start: NaiveTime,
    pub day_end: NaiveTime,
    pub weekdays_only: bool,
}

impl BusinessCalendar {
    pub fn new(day_start: NaiveTime, day_end: NaiveTime, weekdays_only: bool) -> Self {
        BusinessCalendar {
            day_start,
            day_end,
            weekdays_only,
        }
    }

    /// The most active hours default: 06:00-18:00, weekdays.
    pub fn default_active_hours() -> Self {
        BusinessCalendar {
            day_start: NaiveTime::from_hms_opt(6, 0, 0).unwrap(),
            day_end: NaiveTime::from_hms_opt(18, 0, 0).unwrap(),
            weekdays_only: true,
        }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        if self.weekdays_only {
            let wd = t.weekday();
            if wd == Weekday::Sat || wd == Weekday::Sun {
                return false;
            }
        }
        let time = NaiveTime::from_hms_opt(t.hour(), t.minute(), t.second()).unwrap();
        self.day_start <= time && time <= self.day_end
    }
}

/// Regular epoch spacing over `[start, end)`, optionally clipped to business
/// hours. Grid points are `start + k*step` with non-business points removed.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochGrid {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    step: Duration,
    calendar: Option<BusinessCalendar>,
    epochs: Vec<DateTime<Utc>>,
}

impl EpochGrid {
    pub fn new(
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        step: Duration,
        calendar: Option<BusinessCalendar>,
    ) -> Result<Self, TradeError> {
        if step <= Duration::zero() {
            return Err(TradeError::Grid(format!("step must be positive, got {step}")));
        }
        if start >= end {
            return Err(TradeError::Grid(format!(
                "start {start} must precede end {end}"
            )));
        }
        let epochs = progression(start, end, step, calendar.as_ref(), false);
        Ok(EpochGrid {
            start,
            end,
            step,
            calendar,
            epochs,
        })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.end
    }

    pub fn step(&self) -> Duration {
        self.step
    }

    pub fn calendar(&self) -> Option<&BusinessCalendar> {
        self.calendar.as_ref()
    }

    pub fn epochs(&self) -> &[DateTime<Utc>] {
        &self.epochs
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Index range `[lo, hi)` of epochs falling inside `[from, to)`.
    pub fn index_range(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> (usize, usize) {
        let lo = self.epochs.partition_point(|t| *t < from);
        let hi = self.epochs.partition_point(|t| *t < to);
        (lo, hi)
    }

    /// Epochs per calendar year implied by the step and the calendar,
    /// used for annualising per-epoch return statistics.
    pub fn periods_per_year(&self) -> f64 {
        let step_secs = self.step.num_seconds() as f64;
        match &self.calendar {
            Some(cal) => {
                let day_secs = (cal.day_end - cal.day_start).num_seconds() as f64;
                let days = if cal.weekdays_only { 252.0 } else { 365.25 };
                // +1 because both endpoints of the inclusive interval carry a grid point
                days * (day_secs / step_secs + 1.0).max(1.0)
            }
            None => 365.25 * 86_400.0 / step_secs,
        }
    }
}

/// Arithmetic progression `start + k*step` over `[start, end)`, filtered to
/// the calendar. With `whole_slices`, a point also needs `t + step <= end`
/// (trailing partial slice dropped).
pub(crate) fn progression(
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    step: Duration,
    calendar: Option<&BusinessCalendar>,
    whole_slices: bool,
) -> Vec<DateTime<Utc>> {
    let mut out = Vec::new();
    let mut t = start;
    loop {
        if whole_slices {
            if t + step > end {
                break;
            }
        } else if t >= end {
            break;
        }
        if calendar.map_or(true, |c| c.contains(t)) {
            out.push(t);
        }
        t += step;
    }
    out
}
