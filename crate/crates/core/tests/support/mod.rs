pub mod ot_oracle;
