/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_explorer_free: (a: number, b: number) => void;
export const demoShape: () => [number, number];
export const explorer_best: (a: number, b: number) => [number, number, number, number];
export const explorer_evaluate: (a: number, b: number, c: number) => [number, number, number, number];
export const explorer_labels: (a: number) => [number, number];
export const explorer_new: (a: number) => [number, number, number];
export const explorer_predictions: (a: number, b: number, c: number) => [number, number, number, number];
export const explorer_scores: (a: number) => [number, number];
export const occlusionMask: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const perturb: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
