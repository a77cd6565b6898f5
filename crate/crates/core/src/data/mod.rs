mod csv_io;
mod frame;
mod transform;

pub use csv_io::{
    load_dataset, load_frame, read_labels, read_mask, read_values_csv, write_dataset, write_labels, write_mask,
    write_values_csv, EntityData,
};
pub use frame::SeriesFrame;
pub use transform::{downsample, standardize, Standardizer};
