/** Shared types mirroring the review service's JSON API. */
export {};
